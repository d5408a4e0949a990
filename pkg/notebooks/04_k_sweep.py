# coding: utf-8

# # Expansion width
#
# How many proposals to take from the expander at each node? With k=1 the
# search can only follow the expander's first choice; on FakeStandby that is
# the misleading rotate branch.

# In[1]:

from repro_mcts.cli import format_sweep, sweep
from repro_mcts.engine import SearchConfig
from repro_mcts.fixtures import SCENARIOS

sc = SCENARIOS["fakestandby"]
rows = sweep(sc.app, sc.oracle, sc.report.read_text(), seeds=range(50), ks=[1, 2, 3, 4, 5], base=SearchConfig(iteration_budget=50))
print(format_sweep(rows))


# The same table is available from the command line:
#
#     repro-mcts sweep --app <fakestandby.json> --oracle scripted:<fakestandby_oracle.json> --seeds 0..49
