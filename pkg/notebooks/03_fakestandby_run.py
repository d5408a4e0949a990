# coding: utf-8

# # Reproducing the FakeStandby crash
#
# The shipped four-state app crashes when the escape-methods dialog is open
# and the screen is rotated twice. The scripted oracle is deliberately
# misleading: rotating on the main screen scores high, while opening the
# dialog scores low.

# In[1]:

from repro_mcts.engine import MCTSSearch, SearchConfig
from repro_mcts.env import SimEnvironment, load_sim_app, replay_trace
from repro_mcts.fixtures import SCENARIOS
from repro_mcts.oracle import OraclePair, ScriptedOracle, load_scripted_oracle
from repro_mcts.tree import SelectionPolicy

sc = SCENARIOS["fakestandby"]
app = load_sim_app(sc.app)
spec = load_scripted_oracle(sc.oracle, app)
report = sc.report.read_text()
print(report)


# In[2]:

def search(seed, tau=1.8, log=None):
    cfg = SearchConfig(iteration_budget=50, policy=SelectionPolicy(temperature=tau, rng_seed=seed))
    oracle = OraclePair.of(ScriptedOracle(spec, seed))
    return MCTSSearch(cfg, SimEnvironment(app), oracle, report, app.name, on_iteration=log).run()


def show(outcome):
    kids = ", ".join(f"{c.action.to_line()}={c.raw}->{c.mapped}" for c in outcome.children)
    print(f"#{outcome.index:<3} path={outcome.selected_path} [{kids}]")


trace = search(7, log=show)
print(trace.outcome, [a.to_line() for a in trace.actions])


# The trace carries a digest per step, so it can be replayed and checked.

# In[3]:

result = replay_trace(SimEnvironment(app), trace.steps)
print("matched:", result.matched, "crash:", result.crash)


# Argmax selection (tau close to zero) keeps following the misleading branch.

# In[4]:

expected = ["click escape_methods", "rotate", "rotate"]
for tau in (1.8, 0.001):
    wins = sum([a.to_line() for a in search(s, tau).actions] == expected for s in range(100))
    print(f"tau={tau}: {wins}/100 seeds reproduce the crash within 50 iterations")
