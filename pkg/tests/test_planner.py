import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redloop.events import EventLog
from redloop.executor import JudgeConfig, Scenario, SimulatedShell
from redloop.knowledge import KnowledgeRepository, RetrievalResult
from redloop.planner import (
    MergeCycle,
    NO_KNOWLEDGE_MARKER,
    PhaseDeps,
    Plan,
    ReflectionBudget,
    UnparseablePlan,
    UnparseableTask,
    generate_initial_plan,
    merge_tasks,
    parse_task_list,
    regenerate_task,
    run_phase,
    update_plan,
)
from redloop.taskgraph import TaskGraph, normalize_directive

from conftest import FailingBackend, plan_reply, scripted, task


def make_plan(*tasks, phase="reconnaissance", revision=0, goal="own the box"):
    return Plan(graph=TaskGraph(tasks), phase=phase, revision=revision, goal=goal)


class TestParseTaskList:
    def test_plain_json(self):
        tasks = parse_task_list(plan_reply([
            {"seq": 1, "directive": "scan ports"},
            {"seq": 2, "directive": "probe web", "prerequisites": [1]},
        ]))
        assert [t.seq for t in tasks] == [1, 2]
        assert tasks[1].prerequisites == frozenset({1})

    def test_fenced_json(self):
        reply = "```json\n" + plan_reply([{"seq": 1, "directive": "x"}]) + "\n```"
        assert len(parse_task_list(reply)) == 1

    def test_bare_array_accepted(self):
        assert parse_task_list('[{"seq": 1, "directive": "x"}]')[0].seq == 1

    def test_empty_plan_accepted(self):
        assert parse_task_list('{"tasks": []}') == []

    def test_non_json_raises_with_raw_reply(self):
        with pytest.raises(UnparseablePlan) as info:
            parse_task_list("I think we should scan first")
        assert info.value.raw_reply == "I think we should scan first"

    def test_missing_task_list(self):
        with pytest.raises(UnparseablePlan):
            parse_task_list('{"plan": "yes"}')


class TestGenerateInitialPlan:
    def test_clean_reply(self):
        backend = scripted(("planning the reconnaissance phase", plan_reply([
            {"seq": 1, "directive": "scan ports"},
            {"seq": 2, "directive": "probe web", "prerequisites": [1]},
        ])))
        plan = generate_initial_plan("own the box", "reconnaissance", "", backend)
        assert plan.revision == 0
        assert len(plan.graph.tasks) == 2

    def test_forces_tasks_pending(self):
        backend = scripted((".", plan_reply([
            {"seq": 1, "directive": "scan", "completed": True,
             "succeeded": True, "command": "nmap", "outcome": "done"},
        ])))
        plan = generate_initial_plan("g", "scanning", "", backend)
        only = plan.graph.tasks[0]
        assert only.completed is False
        assert only.succeeded is False
        assert only.command is None
        assert only.outcome is None

    def test_two_repairs_then_success(self):
        backend = scripted(
            (".", "not json at all", True),
            (".", '{"tasks": "still wrong"}', True),
            (".", plan_reply([{"seq": 1, "directive": "scan"}])),
        )
        log = EventLog()
        plan = generate_initial_plan("g", "reconnaissance", "", backend,
                                     repairs=2, log=log)
        assert len(plan.graph.tasks) == 1
        warnings = [e for e in log.events if e.kind == "warning"]
        assert len(warnings) == 2
        assert [w.payload["attempt"] for w in warnings] == [1, 2]

    def test_exhausted_repairs_raise(self):
        backend = scripted((".", "garbage", False))
        with pytest.raises(UnparseablePlan):
            generate_initial_plan("g", "reconnaissance", "", backend, repairs=1)

    def test_cyclic_plan_triggers_repair(self):
        backend = scripted(
            (".", plan_reply([
                {"seq": 1, "directive": "a", "prerequisites": [2]},
                {"seq": 2, "directive": "b", "prerequisites": [1]},
            ]), True),
            (".", plan_reply([{"seq": 1, "directive": "a"}])),
        )
        plan = generate_initial_plan("g", "reconnaissance", "", backend)
        assert len(plan.graph.tasks) == 1

    def test_empty_goal_rejected(self):
        with pytest.raises(ValueError):
            generate_initial_plan("", "reconnaissance", "", FailingBackend())


class TestRegenerateTask:
    def test_replacement_keeps_seq_and_prereqs(self):
        failed = task(3, "brute force ssh", prereqs=(1, 2), completed=True,
                      command="hydra old", outcome="Connection refused")
        backend = scripted((".", json.dumps(
            {"directive": "retry ssh with service check", "command": "hydra new"})))
        fresh = regenerate_task(failed, [], backend)
        assert fresh.seq == 3
        assert fresh.prerequisites == frozenset({1, 2})
        assert fresh.directive == "retry ssh with service check"
        assert fresh.command == "hydra new"
        assert fresh.completed is False and fresh.succeeded is False

    def test_prompt_carries_failure_details_and_knowledge(self):
        captured = {}

        class Recorder:
            def reply(self, request):
                captured["prompt"] = request.messages[-1][1]
                return json.dumps({"directive": "fixed"})

        repo = KnowledgeRepository()
        entry = repo.store("check if ssh is on a nonstandard port", "curated")
        hit = RetrievalResult(entry=entry, similarity=0.8, rerank_score=0.8)
        failed = task(1, "brute force ssh", completed=True,
                      command="hydra -l root", outcome="Connection refused")
        regenerate_task(failed, [hit], Recorder())
        assert "brute force ssh" in captured["prompt"]
        assert "hydra -l root" in captured["prompt"]
        assert "Connection refused" in captured["prompt"]
        assert "nonstandard port" in captured["prompt"]
        assert NO_KNOWLEDGE_MARKER not in captured["prompt"]

    def test_marker_when_no_knowledge(self):
        captured = {}

        class Recorder:
            def reply(self, request):
                captured["prompt"] = request.messages[-1][1]
                return json.dumps({"directive": "fixed"})

        regenerate_task(task(1, "x", completed=True), [], Recorder())
        assert NO_KNOWLEDGE_MARKER in captured["prompt"]

    def test_unusable_reply_raises(self):
        backend = scripted((".", "try something else maybe"))
        with pytest.raises(UnparseableTask):
            regenerate_task(task(1, "x", completed=True), [], backend)


class TestMergeTasks:
    def test_hand_traced_preserve_and_reuse(self):
        # old: 1 done-ok, 2 failed, 3 pending; new plan reuses task 1's
        # directive and adds a fresh follow-up.
        old = make_plan(
            task(1, "scan ports", completed=True, succeeded=True,
                 command="nmap", outcome="80 open"),
            task(2, "probe web", prereqs=(1,), completed=True, succeeded=False),
            task(3, "exploit", prereqs=(2,)),
        )
        new = [
            task(1, "scan ports"),
            task(2, "probe web with nikto", prereqs=(1,)),
            task(3, "exploit upload", prereqs=(2,)),
        ]
        merged = merge_tasks(old, new)
        tasks = merged.graph.tasks
        assert [t.seq for t in tasks] == [1, 2, 3]
        assert tasks[0].directive == "scan ports"
        assert tasks[0].completed and tasks[0].succeeded
        assert tasks[0].command == "nmap"  # reused original, not a blank copy
        assert tasks[1].directive == "probe web with nikto"
        assert not tasks[1].completed
        assert tasks[1].prerequisites == frozenset({1})
        assert tasks[2].prerequisites == frozenset({2})
        assert merged.revision == old.revision + 1

    def test_hand_traced_absent_success_comes_first_cleared(self):
        old = make_plan(
            task(1, "get creds", completed=True, succeeded=True, command="c"),
            task(2, "pivot", prereqs=(1,), completed=True, succeeded=True,
                 command="p"),
        )
        new = [task(1, "escalate to root")]
        merged = merge_tasks(old, new)
        tasks = merged.graph.tasks
        assert [t.directive for t in tasks] == [
            "get creds", "pivot", "escalate to root"]
        # carried-over successes lead with cleared prerequisites
        assert tasks[0].prerequisites == frozenset()
        assert tasks[1].prerequisites == frozenset()
        assert tasks[0].succeeded and tasks[1].succeeded
        assert not tasks[2].completed

    def test_hand_traced_prereq_remap(self):
        old = make_plan(
            task(1, "done thing", completed=True, succeeded=True),
        )
        # new plan numbers its tasks 10 and 20; output must renumber and
        # remap 20's dependency on 10.
        new = [
            task(10, "first new"),
            task(20, "second new", prereqs=(10,)),
        ]
        merged = merge_tasks(old, new)
        tasks = merged.graph.tasks
        assert [t.seq for t in tasks] == [1, 2, 3]
        assert tasks[0].directive == "done thing"
        by_directive = {t.directive: t for t in tasks}
        assert by_directive["second new"].prerequisites == \
            frozenset({by_directive["first new"].seq})

    def test_dangling_new_prereq_is_merge_cycle(self):
        old = make_plan(task(1, "a", completed=True, succeeded=True))
        new = [task(1, "b", prereqs=(99,))]
        with pytest.raises(MergeCycle):
            merge_tasks(old, new)

    def test_directive_match_is_whitespace_insensitive(self):
        old = make_plan(task(1, "scan   ports ", completed=True, succeeded=True,
                             command="nmap"))
        merged = merge_tasks(old, [task(1, " scan ports")])
        assert len(merged.graph.tasks) == 1
        assert merged.graph.tasks[0].succeeded
        assert merged.graph.tasks[0].command == "nmap"


directive_pool = [f"directive {i}" for i in range(8)]


@st.composite
def plan_pairs(draw):
    n_old = draw(st.integers(1, 6))
    old_tasks = []
    for seq in range(1, n_old + 1):
        prereqs = draw(st.sets(st.integers(1, seq - 1))) if seq > 1 else set()
        completed = draw(st.booleans())
        old_tasks.append(task(
            seq,
            draw(st.sampled_from(directive_pool)),
            prereqs=prereqs,
            completed=completed,
            succeeded=completed and draw(st.booleans()),
            command="c" if completed else None,
        ))
    n_new = draw(st.integers(0, 6))
    new_tasks = []
    for seq in range(1, n_new + 1):
        prereqs = draw(st.sets(st.integers(1, seq - 1))) if seq > 1 else set()
        new_tasks.append(task(
            seq, draw(st.sampled_from(directive_pool)), prereqs=prereqs))
    return make_plan(*old_tasks), new_tasks


class TestMergeProperties:
    @settings(max_examples=300, deadline=None)
    @given(plan_pairs())
    def test_success_preservation_and_acyclicity(self, pair):
        old, new_tasks = pair
        merged = merge_tasks(old, new_tasks)
        tasks = merged.graph.tasks

        # every completed-successful directive of the old plan survives,
        # still marked successful
        old_successes = {
            t.normalized_directive for t in old.graph.tasks
            if t.completed and t.succeeded
        }
        merged_successes = {
            t.normalized_directive for t in tasks if t.completed and t.succeeded
        }
        assert old_successes <= merged_successes

        # consecutive renumbering starting at 1
        assert [t.seq for t in tasks] == list(range(1, len(tasks) + 1))

        # prerequisites resolve and never point forward to form a cycle
        seqs = {t.seq for t in tasks}
        for t in tasks:
            assert t.prerequisites <= seqs
            assert t.seq not in t.prerequisites

        # every new-plan directive appears
        for nt in new_tasks:
            assert nt.normalized_directive in {
                t.normalized_directive for t in tasks}


class TestUpdatePlan:
    def _old_plan(self):
        return make_plan(
            task(1, "scan ports", completed=True, succeeded=True, command="nmap"),
            task(2, "probe web", prereqs=(1,), completed=True, succeeded=False,
                 command="nikto", outcome="Connection refused"),
        )

    def test_successful_revision(self):
        backend = scripted(("Revise the reconnaissance phase plan", plan_reply([
            {"seq": 1, "directive": "scan ports"},
            {"seq": 2, "directive": "probe web on alternate port",
             "prerequisites": [1]},
        ])))
        plan = self._old_plan()
        failed = plan.graph.tasks[1]
        revised = update_plan(plan, failed, "Connection refused", backend)
        assert revised.revision == 1
        directives = [t.directive for t in revised.graph.tasks]
        assert "probe web on alternate port" in directives
        assert revised.graph.tasks[0].succeeded  # success carried over

    def test_prompt_lists_successes_and_failures(self):
        captured = {}

        class Recorder:
            def reply(self, request):
                captured["prompt"] = request.messages[-1][1]
                return plan_reply([{"seq": 1, "directive": "scan ports"}])

        plan = self._old_plan()
        update_plan(plan, plan.graph.tasks[1], "Connection refused", Recorder())
        prompt = captured["prompt"]
        assert "- scan ports" in prompt
        assert "- probe web" in prompt
        assert "Connection refused" in prompt

    def test_backend_failure_degrades_to_original(self):
        plan = self._old_plan()
        log = EventLog()
        out = update_plan(plan, plan.graph.tasks[1], "r", FailingBackend(), log=log)
        assert out is plan
        assert [e.kind for e in log.events] == ["warning"]

    def test_unparseable_revision_degrades_to_original(self):
        plan = self._old_plan()
        log = EventLog()
        backend = scripted((".", "let me think about this"))
        out = update_plan(plan, plan.graph.tasks[1], "r", backend, log=log)
        assert out is plan
        assert [e.kind for e in log.events] == ["warning"]


def shell_for(rules, flag="FLAG{t}"):
    return SimulatedShell(Scenario.from_dict({
        "initial_state": "s", "flag": flag, "milestones": [],
        "rules": rules,
    }))


def deps_for(backend, shell, **kwargs):
    return PhaseDeps(
        channel=shell,
        repo=KnowledgeRepository(),
        backend=backend,
        judge=JudgeConfig(),
        log=EventLog(),
        **kwargs,
    )


class TestRunPhase:
    def test_all_tasks_succeed(self):
        backend = scripted(
            ("Directive: list files", "ls", True),
            ("Directive: show user", "whoami", True),
        )
        shell = shell_for([
            {"state": "*", "pattern": "^ls$", "output": "flag.txt"},
            {"state": "*", "pattern": "^whoami$", "output": "root"},
        ])
        plan = make_plan(task(1, "list files"), task(2, "show user", prereqs=(1,)))
        deps = deps_for(backend, shell)
        budget = ReflectionBudget(max_iterations=10)
        outcome = run_phase(plan, deps, budget)
        assert outcome.halt_reason == "all_done"
        assert [t.directive for t in outcome.finished] == [
            "list files", "show user"]
        assert budget.used == 2
        assert len(deps.repo) == 2  # one embedding stored per success
        kinds = [e.kind for e in deps.log.events]
        assert kinds.count("task_completed") == 2

    def test_failure_then_reflection_recovers(self):
        backend = scripted(
            ("Directive: read the flag", "grab-flag --fast", True),
            ("task failed and must be regenerated",
             json.dumps({"directive": "read the flag file directly"})),
            ("Revise the reconnaissance phase plan",
             plan_reply([{"seq": 1, "directive": "read the flag file directly"}])),
            ("Directive: read the flag file directly", "cat /flag.txt"),
        )
        shell = shell_for([
            {"state": "*", "pattern": r"^cat /flag\.txt$", "output": "FLAG{t}"},
        ])
        plan = make_plan(task(1, "read the flag"))
        deps = deps_for(backend, shell, flag="FLAG{t}")
        budget = ReflectionBudget(max_iterations=10)
        outcome = run_phase(plan, deps, budget)
        assert outcome.halt_reason == "all_done"
        assert outcome.flag_found is True
        assert outcome.plan.revision >= 1
        kinds = [e.kind for e in deps.log.events]
        assert "plan_updated" in kinds
        assert kinds.count("task_completed") == 1

    def test_budget_exhausted(self):
        backend = scripted(
            ("Directive:", "badcmd", False),
            ("task failed and must be regenerated",
             json.dumps({"directive": "never works"}), False),
            ("Revise the", plan_reply([{"seq": 1, "directive": "never works"}]),
             False),
        )
        shell = shell_for([])  # everything exits 127
        plan = make_plan(task(1, "never works"))
        deps = deps_for(backend, shell)
        budget = ReflectionBudget(max_iterations=3)
        outcome = run_phase(plan, deps, budget)
        assert outcome.halt_reason == "budget_exhausted"
        assert budget.used == 3
        assert outcome.finished == []

    def test_blocked_when_dependent_cannot_run(self):
        # regeneration is unusable, so the failed task stays failed and its
        # dependent is permanently blocked
        backend = scripted(
            ("Directive: first step", "badcmd", True),
            ("task failed and must be regenerated", "no json here", False),
        )
        shell = shell_for([])
        plan = make_plan(task(1, "first step"), task(2, "second step", prereqs=(1,)))
        deps = deps_for(backend, shell)
        outcome = run_phase(plan, deps, ReflectionBudget(max_iterations=10))
        assert outcome.halt_reason == "blocked"
        assert outcome.finished == []

    def test_flag_found_halts_immediately(self):
        backend = scripted(
            ("Directive: grab flag", "cat /flag", True),
            ("Directive: pointless followup", "true", True),
        )
        shell = shell_for([
            {"state": "*", "pattern": "^cat /flag$", "output": "FLAG{t}"},
            {"state": "*", "pattern": "^true$", "output": ""},
        ])
        plan = make_plan(task(1, "grab flag"), task(2, "pointless followup"))
        deps = deps_for(backend, shell, flag="FLAG{t}")
        outcome = run_phase(plan, deps, ReflectionBudget(max_iterations=10))
        assert outcome.flag_found is True
        assert outcome.halt_reason == "all_done"
        assert len(outcome.finished) == 1  # second task never ran

    def test_empty_plan_is_all_done_with_zero_executions(self):
        plan = make_plan()
        deps = deps_for(FailingBackend(), shell_for([]))
        budget = ReflectionBudget()
        outcome = run_phase(plan, deps, budget)
        assert outcome.halt_reason == "all_done"
        assert budget.used == 0
        assert list(deps.log.events) == []
