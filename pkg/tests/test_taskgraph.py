import random

import pytest
from hypothesis import given, settings, strategies as st

from redloop.taskgraph import (
    CycleIntroduced,
    DanglingPrerequisite,
    DuplicateSeq,
    Task,
    TaskGraph,
    normalize_directive,
)

from conftest import task


def dfs_has_cycle(edges: set[tuple[int, int]], nodes: set[int]) -> bool:
    """Independent cycle check by plain DFS over an explicit edge set."""
    adj: dict[int, list[int]] = {n: [] for n in nodes}
    for u, v in edges:
        adj[u].append(v)
    state = {n: 0 for n in nodes}

    def visit(n: int) -> bool:
        state[n] = 1
        for m in adj[n]:
            if state[m] == 1 or (state[m] == 0 and visit(m)):
                return True
        state[n] = 2
        return False

    return any(state[n] == 0 and visit(n) for n in nodes)


class TestTaskInvariants:
    def test_succeeded_requires_completed(self):
        with pytest.raises(ValueError):
            task(1, completed=False, succeeded=True)

    def test_self_prerequisite_rejected(self):
        with pytest.raises(ValueError):
            task(1, prereqs={1})

    def test_normalize_directive(self):
        assert normalize_directive("  scan   the\thost \n") == "scan the host"
        assert normalize_directive("Scan Host") == "Scan Host"  # case preserved


class TestAddTask:
    def test_insert_into_empty_graph(self):
        graph = TaskGraph().add_task(task(1))
        assert len(graph) == 1

    def test_chain_of_two(self):
        graph = TaskGraph().add_task(task(1)).add_task(task(2, prereqs={1}))
        assert graph.edges == ((1, 2),)

    def test_rewrite_introducing_cycle(self):
        # oracle: exhaustive DFS on the 2-node graph confirms 1<->2 cycles
        graph = TaskGraph([task(1), task(2, prereqs={1})])
        assert dfs_has_cycle({(1, 2), (2, 1)}, {1, 2})
        with pytest.raises(CycleIntroduced):
            graph.replace_task(task(1, prereqs={2}))

    def test_duplicate_seq(self):
        with pytest.raises(DuplicateSeq):
            TaskGraph([task(1)]).add_task(task(1))

    def test_dangling_prerequisite(self):
        with pytest.raises(DanglingPrerequisite):
            TaskGraph().add_task(task(2, prereqs={1}))


class TestNextTask:
    def brute_force_next(self, graph: TaskGraph):
        # enumeration oracle: incomplete tasks whose prereqs all succeeded
        candidates = [
            t for t in graph.tasks
            if not t.completed
            and all(graph.get(p).completed and graph.get(p).succeeded
                    for p in t.prerequisites)
        ]
        return min(candidates, key=lambda t: t.seq) if candidates else None

    def test_chain_returns_middle(self):
        graph = TaskGraph([
            task(1, completed=True, succeeded=True, command="x"),
            task(2, prereqs={1}),
            task(3, prereqs={2}),
        ])
        assert graph.next_task() == self.brute_force_next(graph)
        assert graph.next_task().seq == 2

    def test_fully_completed_returns_none(self):
        graph = TaskGraph([task(1, completed=True, succeeded=True, command="x")])
        assert graph.next_task() is None

    def test_failed_prerequisite_blocks(self):
        graph = TaskGraph([
            task(1, completed=True, succeeded=False, command="x"),
            task(2, prereqs={1}),
        ])
        assert self.brute_force_next(graph) is None
        assert graph.next_task() is None


class TestReadySet:
    def test_diamond(self):
        graph = TaskGraph([
            task(1, completed=True, succeeded=True, command="x"),
            task(2, prereqs={1}),
            task(3, prereqs={1}),
            task(4, prereqs={2, 3}),
        ])
        assert {t.seq for t in graph.ready_set()} == {2, 3}

    def test_empty_graph(self):
        assert TaskGraph().ready_set() == set()

    def test_single_pending_root(self):
        graph = TaskGraph([task(1)])
        assert {t.seq for t in graph.ready_set()} == {1}

    def test_next_task_is_min_of_ready_set(self):
        graph = TaskGraph([task(3), task(5), task(9)])
        ready = graph.ready_set()
        assert graph.next_task().seq == min(t.seq for t in ready)


class TestRenumber:
    def test_order_preserving_relabel(self):
        graph = TaskGraph([task(2), task(5, prereqs={2}), task(9)])
        renum = graph.renumber()
        assert [t.seq for t in renum.tasks] == [1, 2, 3]
        assert renum.edges == ((1, 2),)

    def test_idempotent_on_consecutive(self):
        graph = TaskGraph([task(1), task(2, prereqs={1})])
        assert graph.renumber() == graph

    def test_random_dag_edge_isomorphism(self):
        # oracle: adjacency matrices agree after permuting through the map
        rng = random.Random(7)
        seqs = sorted(rng.sample(range(1, 50), 6))
        tasks = []
        for i, s in enumerate(seqs):
            prereqs = {p for p in seqs[:i] if rng.random() < 0.5}
            tasks.append(task(s, prereqs=prereqs))
        graph = TaskGraph(tasks)
        renum = graph.renumber()
        mapping = {old: new for new, old in enumerate(seqs, start=1)}
        assert {(mapping[u], mapping[v]) for u, v in graph.edges} == set(renum.edges)
        for old_task, new_task in zip(graph.tasks, renum.tasks):
            assert old_task.directive == new_task.directive
            assert old_task.completed == new_task.completed
            assert old_task.succeeded == new_task.succeeded


@given(st.lists(st.tuples(st.integers(0, 9), st.sets(st.integers(0, 9))), max_size=12))
@settings(max_examples=200)
def test_random_inserts_never_yield_cycle(spec):
    """Random valid insert sequences keep the graph acyclic under DFS."""
    graph = TaskGraph()
    for raw_seq, raw_prereqs in spec:
        seq = raw_seq + 1
        prereqs = {p + 1 for p in raw_prereqs if (p + 1) in graph and (p + 1) != seq}
        if seq in graph:
            continue
        graph = graph.add_task(task(seq, prereqs=prereqs))
    nodes = {t.seq for t in graph.tasks}
    assert not dfs_has_cycle(set(graph.edges), nodes)
    nxt = graph.next_task()
    ready = graph.ready_set()
    if ready:
        assert nxt in ready
        assert nxt.seq == min(t.seq for t in ready)
    else:
        assert nxt is None


def test_json_round_trip():
    graph = TaskGraph([
        task(1, directive="scan", completed=True, succeeded=True, command="nmap",
             outcome="80 open"),
        task(2, directive="probe", prereqs={1}),
    ])
    restored = TaskGraph.from_json(graph.to_json())
    assert restored == graph
