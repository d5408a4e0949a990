import json
from dataclasses import replace

import pytest

from repro_mcts.engine import (
    BUDGET_EXHAUSTED,
    CRASH_REPRODUCED,
    TREE_EXHAUSTED,
    MCTSSearch,
    SearchConfig,
    remove_cycles,
    run_search,
)
from repro_mcts.env import (
    ActionCommand,
    SimAppSpec,
    SimEnvironment,
    TraceStep,
    load_sim_app,
    observation_digest,
    replay_trace,
)
from repro_mcts.errors import ConfigError, ContractError, DeterminismError, OracleError
from repro_mcts.fixtures import SCENARIOS
from repro_mcts.oracle import STANDARD_ROLLOUT, OraclePair, ScriptedOracle, ScriptedOracleSpec
from repro_mcts.tree import LevelConfig, NodeStatus, map_score

from conftest import scripted_pair

REPORT = "The app crashes."


def three_buttons_app():
    return SimAppSpec.from_dict(
        {
            "initial": "A",
            "states": {
                "A": {"activity": "Main", "widgets": [{"id": w} for w in ("a", "b", "c")]},
                "Boom": {"activity": "Main", "crash": True},
            },
            "transitions": [{"from": "A", "action": "click", "feature": "b", "to": "Boom"}],
        }
    )


def fixed_oracle(actions, score=5, default=None):
    data = {
        "default_score": score,
        "proposals": [{"when": {}, "actions": [{"action": k, "feature": f} for k, f in actions]}],
    }
    return ScriptedOracle(ScriptedOracleSpec.from_dict(data))


class SilentOracle:
    def propose(self, request):
        return []

    def score(self, request):
        return 5


class SpyEnv:
    """Records every execute together with the digest it started from."""

    def __init__(self, inner):
        self.inner = inner
        self.log = []

    def reset(self):
        self.log.append(("reset",))
        return self.inner.reset()

    def observe(self):
        return self.inner.observe()

    def execute(self, action):
        before = observation_digest(self.inner.observe())
        result = self.inner.execute(action)
        self.log.append(("execute", action, before, observation_digest(result.observation)))
        return result

    def executable_actions(self):
        return self.inner.executable_actions()


class CountingOracle:
    def __init__(self, inner):
        self.inner = inner
        self.calls = []

    def propose(self, request):
        self.calls.append("propose")
        return self.inner.propose(request)

    def score(self, request):
        self.calls.append("score")
        return self.inner.score(request)


def fs_search(seed, **cfg):
    app, oracle = scripted_pair(SCENARIOS["fakestandby"], seed)
    config = SearchConfig(**cfg).with_seed(seed)
    return MCTSSearch(config, SimEnvironment(app), oracle, REPORT, app.name)


# -- run_search examples -----------------------------------------------------------


def test_single_crash_forced_path():
    app, oracle = scripted_pair(SCENARIOS["single_crash"], 0)
    trace = run_search(SearchConfig(), SimEnvironment(app), oracle, REPORT)
    assert trace.outcome == CRASH_REPRODUCED
    assert trace.actions == [ActionCommand("click", "crash_button")]
    assert trace.iterations_used == 1


def test_no_crash_never_reproduces():
    for seed in range(5):
        app, oracle = scripted_pair(SCENARIOS["no_crash"], seed)
        trace = run_search(SearchConfig(iteration_budget=60).with_seed(seed), SimEnvironment(app), oracle, REPORT)
        assert trace.outcome in (BUDGET_EXHAUSTED, TREE_EXHAUSTED)
        assert trace.steps == []
        assert trace.iterations_used <= 60


def test_fakestandby_seed7_trace():
    trace = fs_search(7).run()
    assert trace.outcome == CRASH_REPRODUCED
    assert [a.to_line() for a in trace.actions] == ["click escape_methods", "rotate", "rotate"]
    replay = replay_trace(SimEnvironment(load_sim_app(SCENARIOS["fakestandby"].app)), trace.steps)
    assert replay.matched and replay.crash


def test_empty_report_rejected(fs_app):
    with pytest.raises(ContractError):
        MCTSSearch(SearchConfig(), SimEnvironment(fs_app), OraclePair.of(SilentOracle()), "  ")


# -- iterate examples --------------------------------------------------------------


def test_first_iteration_selects_root_then_deeper():
    search = fs_search(0)
    search.tree = None
    outcomes = []
    search.on_iteration = outcomes.append
    search.config = replace(search.config, iteration_budget=2)
    search.run()
    assert outcomes[0].selected_path == [0]
    assert len(outcomes[1].selected_path) >= 2


def test_crash_on_second_of_three_children():
    env = SpyEnv(SimEnvironment(three_buttons_app()))
    oracle = CountingOracle(fixed_oracle([("click", "a"), ("click", "b"), ("click", "c")]))
    outcomes = []
    cfg = SearchConfig(shorten_trace=False)
    trace = MCTSSearch(cfg, env, OraclePair.of(oracle), REPORT, on_iteration=outcomes.append).run()
    (it,) = outcomes
    assert it.crash_found
    assert len(it.raw_scores) == 2 and len(it.expanded_actions) == 2
    executed = [e[1].feature for e in env.log if e[0] == "execute"]
    assert executed == ["a", "b"]
    # nothing happens after the crash: the last env call is the crashing click and the last oracle call its score
    assert env.log[-1][0] == "execute" and env.log[-1][1].feature == "b"
    assert oracle.calls == ["propose", "score", "score"]
    assert trace.actions == [ActionCommand("click", "b")]


def test_depth_cap_marks_exhausted():
    # crash needs 3 steps; max_depth=2 makes it unreachable
    cfg = SearchConfig(max_depth=2, iteration_budget=200)
    search = fs_search(1, max_depth=2, iteration_budget=200)
    records = []
    search.on_iteration = records.append
    trace = search.run()
    assert trace.outcome == TREE_EXHAUSTED
    assert any(r.status == "depth_cap" for r in records)
    assert all(len(r.path_actions) <= cfg.max_depth for r in records)
    assert search.tree.root.status is NodeStatus.EXHAUSTED


class FailingExpander:
    def propose(self, request):
        raise OracleError("upstream down")


def test_oracle_failure_marks_node_exhausted(fs_app):
    inner = fixed_oracle([("rotate", "")])
    search = MCTSSearch(SearchConfig(), SimEnvironment(fs_app), OraclePair(FailingExpander(), inner), REPORT)
    records = []
    search.on_iteration = records.append
    trace = search.run()
    assert trace.outcome == TREE_EXHAUSTED and trace.iterations_used == 1
    assert records[0].status == "oracle_failure"
    assert records[0].backprop_mean == LevelConfig().low
    assert search.tree.root.visit_count == 1 and search.tree.root.total_score == 1.0


def test_empty_proposals_marks_node_exhausted(fs_app):
    search = MCTSSearch(SearchConfig(), SimEnvironment(fs_app), OraclePair.of(SilentOracle()), REPORT)
    records = []
    search.on_iteration = records.append
    assert search.run().outcome == TREE_EXHAUSTED
    assert records[0].status == "no_proposals" and records[0].backprop_mean == 1


def test_duplicate_proposals_collapse(fs_app):
    oracle = fixed_oracle([("click", "start_service"), ("click", "START_SERVICE"), ("rotate", "")])
    search = MCTSSearch(SearchConfig(iteration_budget=1), SimEnvironment(fs_app), OraclePair.of(oracle), REPORT)
    records = []
    search.on_iteration = records.append
    search.run()
    assert [a.to_line() for a in records[0].expanded_actions] == ["click start_service", "rotate"]


# -- standard_rollout ablation ---------------------------------------------------------


class NoScoring:
    def score(self, request):
        raise AssertionError("simulator must not be queried under standard_rollout")


def test_standard_rollout_replaces_simulator():
    app, pair = scripted_pair(SCENARIOS["fakestandby"], 3)
    oracle = OraclePair(pair.expander, NoScoring())
    records = []
    cfg = SearchConfig(ablations={STANDARD_ROLLOUT}, iteration_budget=60).with_seed(3)
    trace = MCTSSearch(cfg, SimEnvironment(app), oracle, REPORT, on_iteration=records.append).run()
    raws = {r for rec in records for r in rec.raw_scores}
    assert raws <= {0, 10}
    for rec in records:
        assert rec.mapped_scores == [map_score(r, cfg.levels) for r in rec.raw_scores]
        if not rec.crash_found and rec.children:
            assert rec.root_digest_end is not None
    if trace.outcome == CRASH_REPRODUCED:
        assert replay_trace(SimEnvironment(app), trace.steps).crash


def test_standard_rollout_is_seeded():
    def run(seed):
        app, pair = scripted_pair(SCENARIOS["fakestandby"], seed)
        recs = []
        cfg = SearchConfig(ablations={STANDARD_ROLLOUT}, iteration_budget=30).with_seed(seed)
        MCTSSearch(cfg, SimEnvironment(app), pair, REPORT, on_iteration=recs.append).run()
        return [r.to_record() for r in recs]

    assert run(11) == run(11)


# -- invariants ------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_tree_statistics_invariants(name):
    for seed in range(10):
        app, oracle = scripted_pair(SCENARIOS[name], seed)
        records = []
        search = MCTSSearch(
            SearchConfig(iteration_budget=80).with_seed(seed), SimEnvironment(app), oracle, REPORT, on_iteration=records.append
        )
        trace = search.run()
        tree = search.tree
        assert tree.root.visit_count == trace.iterations_used == len(records)
        for node in tree.nodes():
            for e in node.children:
                assert node.visit_count >= e.child.visit_count >= 1
            if node.status is NodeStatus.UNEXPANDED:
                assert not node.children
            assert node.total_score >= 0
        for rec in records:
            assert rec.mapped_scores == [map_score(r, search.config.levels) for r in rec.raw_scores]
            keys = [a.key for a in rec.expanded_actions]
            assert len(keys) == len(set(keys))


def test_wall_clock_budget_respected(fs_app):
    ticks = iter(range(10_000))
    search = fs_search(2, wall_clock_budget=5.0)
    search.clock = lambda: float(next(ticks))
    trace = search.run()
    # each iteration reads the clock once; slack is at most one iteration
    assert trace.outcome in (BUDGET_EXHAUSTED, CRASH_REPRODUCED)
    assert trace.iterations_used <= 5


def test_iteration_budget_respected():
    app, oracle = scripted_pair(SCENARIOS["no_crash"], 0)
    trace = run_search(SearchConfig(iteration_budget=7), SimEnvironment(app), oracle, REPORT)
    assert trace.iterations_used <= 7


class DriftingEnv(SimEnvironment):
    """Reset attaches a counter, so replayed digests never match the record."""

    def __init__(self, spec):
        super().__init__(spec)
        self.resets = 0

    def reset(self):
        self.resets += 1
        return super().reset()

    def observe(self):
        obs = super().observe()
        return replace(obs, attachment=str(self.resets).encode())


def test_nondeterministic_env_is_fatal(fs_app):
    with pytest.raises(DeterminismError):
        MCTSSearch(SearchConfig(), DriftingEnv(fs_app), scripted_pair(SCENARIOS["fakestandby"], 0)[1], REPORT).run()


def test_already_crashed_app_rejected():
    app = SimAppSpec.from_dict({"initial": "X", "states": {"X": {"activity": "A", "crash": True}}})
    with pytest.raises(ContractError):
        run_search(SearchConfig(), SimEnvironment(app), OraclePair.of(SilentOracle()), REPORT)


def test_determinism_same_seed():
    def go(seed):
        recs = []
        s = fs_search(seed)
        s.on_iteration = recs.append
        t = s.run()
        return t.steps, t.outcome, json.dumps([r.to_record() for r in recs])

    assert go(4) == go(4)


# -- config --------------------------------------------------------------------------------


def test_config_defaults():
    cfg = SearchConfig()
    assert (cfg.k, cfg.iteration_budget, cfg.wall_clock_budget, cfg.max_depth) == (3, 200, 1800.0, 25)
    assert (cfg.policy.temperature, cfg.policy.exploration) == (1.8, 1.414)
    assert cfg.levels == LevelConfig(5, 2, 1, 3)


def test_config_round_trip():
    cfg = SearchConfig.for_k(4, ablations={STANDARD_ROLLOUT}).with_seed(9)
    assert SearchConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize(
    "kwargs",
    [
        {"k": 0},
        {"iteration_budget": 0},
        {"wall_clock_budget": 0},
        {"max_depth": 0},
        {"ablations": {"nope"}},
        {"levels": LevelConfig(3, 2, 1)},
        {"k": 4},  # default levels were validated for k=3
    ],
)
def test_config_rejections(kwargs):
    with pytest.raises(ConfigError):
        SearchConfig(**kwargs)


# -- trace shortening --------------------------------------------------------------------------


def step(name):
    return TraceStep(ActionCommand("click", name), f"d-{name}")


def test_remove_cycles_drops_loops():
    # root -> x -> root -> y
    steps = [TraceStep(ActionCommand("click", "x"), "dx"), TraceStep(ActionCommand("back"), "root"), step("y")]
    assert remove_cycles("root", steps) == [steps[2]]


def test_remove_cycles_keeps_simple_paths():
    steps = [step("a"), step("b"), step("c")]
    assert remove_cycles("root", steps) == steps


def test_shortened_traces_still_replay():
    app = load_sim_app(SCENARIOS["fakestandby"].app)
    for seed in range(30):
        trace = fs_search(seed, iteration_budget=100).run()
        if trace.outcome == CRASH_REPRODUCED:
            digests = [observation_digest(SimEnvironment(app).reset())] + [s.digest for s in trace.steps]
            assert len(set(digests)) == len(digests)
            r = replay_trace(SimEnvironment(app), trace.steps)
            assert r.matched and r.crash
