"""Statement execution, green threads and the cooperative scheduler.

One statement reduction at a time: a task owns a stack of (statement,
environment) frames and `exec_stmt` pops and interprets the top one,
pushing continuations.  Tail calls replace the popped frame, so the
stack stays flat through recursion.

Threads are cooperatively scheduled in timeslices over a single store.
Blocking is dataflow only: a thread that needs a variable's value parks
on it and is woken by the binding.  Time is virtual: `Delay` sleeps the
thread, and the clock jumps forward only when nothing is runnable.
"""

from __future__ import annotations

import random as _random
import time as _time
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (ChoiceOutsideSearchError, OzkError, QuietGuardViolation,
                     RuntimeFailure, ThreadInSearchError)
from .syntax import (BuiltinCall, Call, CaseStmt, CCompound, Choice, CLit,
                     CVar, Fail, IfStmt, Local, PAnon, PCompound, PLit,
                     ProcDef, PVar, Seq, Skip, ThreadStmt, Unify)
from .terms import (Atom, Closure, Compound, Int, NativeProc, Store, Term,
                    Var, render)

# -- control-flow signals -----------------------------------------------------


class Failure(Exception):
    """Declarative failure: a unification or test came out false."""

    def __init__(self, reason: str = ""):
        super().__init__(reason)
        self.reason = reason


class Suspend(Exception):
    """The current statement needs variables that are still unbound."""

    def __init__(self, vars_: list, byneed: bool = False):
        super().__init__()
        self.vars = vars_
        self.byneed = byneed


class SleepRequest(Exception):
    def __init__(self, ms: int):
        super().__init__()
        self.ms = ms


class StepLimit(Exception):
    pass


# -- environments ------------------------------------------------------------

_UP = "\x00up"


def env_child(parent: Optional[dict], bindings: dict) -> dict:
    env = dict(bindings)
    env[_UP] = parent
    return env


def env_get(env: Optional[dict], name: str) -> Term:
    e = env
    while e is not None:
        v = e.get(name)
        if v is not None:
            return v
        e = e[_UP]
    raise OzkError(f"variable {name} has no binding at run time")


def env_names(env: Optional[dict]):
    """Yield (name, term) pairs, innermost scope first."""
    e = env
    while e is not None:
        for name, term in e.items():
            if not name.startswith("\x00"):
                yield name, term
        e = e[_UP]


def build_term(store: Store, expr, env: dict) -> Term:
    if isinstance(expr, CVar):
        return env_get(env, expr.name)
    if isinstance(expr, CLit):
        return expr.value
    if isinstance(expr, CCompound):
        return Compound(expr.label,
                        [build_term(store, a, env) for a in expr.args])
    raise TypeError(f"cannot build {expr!r}")


# -- pattern matching -----------------------------------------------------------

_MATCH_OK = 0
_MATCH_FAIL = 1
_MATCH_UNDET = 2


def match_pattern(store: Store, pattern, term):
    """One-way match of a value against a linear pattern.

    Returns (status, payload): payload is the capture dict on success and
    the blocking variable when undetermined.  The store is never changed.
    """
    captures: dict = {}
    work = [(pattern, term)]
    while work:
        p, t = work.pop()
        t = store.deref(t)
        if isinstance(p, PVar):
            captures[p.name] = t
            continue
        if isinstance(p, PAnon):
            continue
        if isinstance(t, Var):
            return _MATCH_UNDET, t
        if isinstance(p, PLit):
            if isinstance(t, (Atom, Int)) and t == p.value:
                continue
            return _MATCH_FAIL, None
        if isinstance(p, PCompound):
            if (isinstance(t, Compound) and t.label == p.label
                    and len(t.args) == len(p.args)):
                work.extend(reversed(list(zip(p.args, t.args))))
                continue
            return _MATCH_FAIL, None
        raise TypeError(f"bad pattern {p!r}")
    return _MATCH_OK, captures


# -- tasks --------------------------------------------------------------------


class Task:
    """A stack of (statement, env) frames plus context-specific policy."""

    mode = "thread"

    def __init__(self, rt: "Runtime"):
        self.rt = rt
        self.stack: list = []
        self.max_depth = 0

    def push(self, stmt, env):
        self.stack.append((stmt, env))
        if len(self.stack) > self.max_depth:
            self.max_depth = len(self.stack)

    def on_choice(self, alternatives, env):
        raise ChoiceOutsideSearchError(
            "choice is only allowed inside a search engine")

    def on_thread(self, body, env):
        raise ThreadInSearchError("cannot create a thread here")


class ThreadTask(Task):
    def __init__(self, rt, thread):
        super().__init__(rt)
        self.thread = thread

    def on_thread(self, body, env):
        self.rt.spawn(body, env)


class GuardTask(Task):
    mode = "guard"

    def on_thread(self, body, env):
        raise ThreadInSearchError("cannot create a thread inside a guard")


# -- one statement reduction -------------------------------------------------------


def exec_stmt(task: Task, stmt, env):
    rt = task.rt
    store = rt.store
    kind = type(stmt)

    if kind is Seq:
        task.push(stmt.second, env)
        task.push(stmt.first, env)
        return

    if kind is Call:
        target = stmt.target
        target = (env_get(env, target.name) if type(target) is CVar
                  else build_term(store, target, env))
        target = store.deref(target)
        if isinstance(target, Closure):
            if len(stmt.args) != len(target.params):
                raise OzkError(
                    f"{{{target.name or 'a procedure'}}} expects "
                    f"{len(target.params)} arguments, got {len(stmt.args)}")
            args = {}
            for p, a in zip(target.params, stmt.args):
                args[p] = (env_get(env, a.name) if type(a) is CVar
                           else build_term(store, a, env))
            rt.stats.calls[target.name or f"$anon{target.serial}"] += 1
            task.push(target.body, env_child(target.env, args))
            return
        if isinstance(target, NativeProc):
            if len(stmt.args) != target.arity:
                raise OzkError(f"{{{target.name}}} expects {target.arity} "
                               f"arguments, got {len(stmt.args)}")
            args = [build_term(store, a, env) for a in stmt.args]
            target.fn(task, args)
            return
        if isinstance(target, Var):
            raise Suspend([target])
        raise OzkError(f"cannot call {render(store, target)}")

    if kind is Unify:
        e1, e2 = stmt.lhs, stmt.rhs
        t1 = env_get(env, e1.name) if type(e1) is CVar else build_term(store, e1, env)
        t2 = env_get(env, e2.name) if type(e2) is CVar else build_term(store, e2, env)
        res = store.unify(t1, t2)
        if res.woken:
            rt.wake(res.woken)
        if not res.ok:
            raise Failure(f"unification failed: {res.reason}")
        return

    if kind is CaseStmt:
        subject = build_term(store, stmt.subject, env)
        for arm in stmt.arms:
            status, payload = match_pattern(store, arm.pattern, subject)
            if status == _MATCH_OK:
                task.push(arm.body, env_child(env, payload))
                return
            if status == _MATCH_UNDET:
                raise Suspend([payload])
        task.push(stmt.otherwise, env)
        return

    if kind is BuiltinCall:
        fn = rt.builtins.get(stmt.name)
        if fn is None:
            raise OzkError(f"unknown builtin {stmt.name}")
        args = [build_term(store, a, env) for a in stmt.args]
        fn(task, args)
        return

    if kind is Local:
        fresh = {n: store.new_var() for n in stmt.names}
        task.push(stmt.body, env_child(env, fresh))
        return

    if kind is IfStmt:
        exec_if(task, stmt, env)
        return

    if kind is Skip:
        return

    if kind is ProcDef:
        closure = Closure(stmt.name, stmt.params, stmt.body, env)
        res = store.unify(env_get(env, stmt.name), closure)
        if res.woken:
            rt.wake(res.woken)
        if not res.ok:
            raise Failure(f"{stmt.name} is already bound to something else")
        return

    if kind is ThreadStmt:
        task.on_thread(stmt.body, env)
        return

    if kind is Fail:
        raise Failure("fail statement")

    if kind is Choice:
        task.on_choice(stmt.alternatives, env)
        return

    raise TypeError(f"cannot execute {stmt!r}")


_PURE_TESTS = frozenset(("==", "<", ">", "=<", ">=", "$test"))


def exec_if(task: Task, stmt: IfStmt, env):
    """Try the arms in order; commit to the first whose guard succeeds.

    Guards run speculatively on a fresh trail.  An undetermined guard
    suspends the whole conditional (sequential semantics), a failing one
    moves on to the next arm, and a successful one must not have bound
    anything that existed before it started.
    """
    rt = task.rt
    store = rt.store
    for arm in stmt.arms:
        guard = arm.guard
        if (not arm.guard_vars and type(guard) is BuiltinCall
                and guard.name in _PURE_TESTS and len(guard.args) <= 2):
            # pure test: cannot bind anything, so no trail is needed
            try:
                exec_stmt(task, guard, env)
            except Failure:
                continue
            task.push(arm.body, env)
            return
        age_mark = store.next_seq
        genv = (env_child(env, {n: store.new_var() for n in arm.guard_vars})
                if arm.guard_vars else env)
        store.push_trail()
        guard = GuardTask(rt)
        guard.push(arm.guard, genv)
        try:
            while guard.stack:
                g_stmt, g_env = guard.stack.pop()
                rt.count_step()
                exec_stmt(guard, g_stmt, g_env)
        except Failure:
            store.undo_to(0)
            store.pop_trail(merge=False)
            continue
        except Suspend:
            store.undo_to(0)
            store.pop_trail(merge=False)
            raise
        entries = store.trails[-1]
        for entry_kind, var in entries:
            if entry_kind == "bind" and (var.vid[0] != store.node_id
                                         or var.vid[1] < age_mark):
                store.undo_to(0)
                store.pop_trail(merge=False)
                raise QuietGuardViolation(
                    "guard bound a variable that exists outside it")
        store.pop_trail(merge=True)
        task.push(arm.body, genv)
        return
    task.push(stmt.otherwise, env)


# -- threads -----------------------------------------------------------------

RUNNABLE = "runnable"
SUSPENDED = "suspended"
SLEEPING = "sleeping"
TERMINATED = "terminated"
FAILED = "failed"


class OzThread:
    __slots__ = ("tid", "task", "status", "waiting_on", "wake_at", "failure",
                 "byneed")

    def __init__(self, tid: int, task: ThreadTask):
        self.tid = tid
        self.task = task
        self.status = RUNNABLE
        self.waiting_on: list = []
        self.wake_at: Optional[int] = None
        self.failure: Optional[str] = None
        self.byneed = False


@dataclass
class Stats:
    reductions: int = 0
    spawned: int = 0
    slices: int = 0
    waitneeded: int = 0
    calls: Counter = field(default_factory=Counter)
    max_depth: int = 0


@dataclass
class RunResult:
    status: str                      # done | failed | deadlock | limit
    clock: int
    browses: list
    browse_log: list
    failures: list
    suspended: list
    stats: Stats
    idle: list = field(default_factory=list)


TIMESLICE = 1000


class Runtime:
    def __init__(self, store: Optional[Store] = None, builtins: Optional[dict] = None,
                 policy: str = "fifo", seed: Optional[int] = None,
                 max_steps: Optional[int] = None, real_time: bool = False,
                 on_browse: Optional[Callable[[str], None]] = None,
                 on_trace: Optional[Callable[[str, dict], None]] = None):
        self.store = store if store is not None else Store()
        self.builtins = builtins if builtins is not None else {}
        self.policy = policy
        self.rng = _random.Random(seed)
        self.max_steps = max_steps
        self.real_time = real_time
        self.on_browse = on_browse
        self.on_trace = on_trace
        self.clock = 0
        self.threads: dict[int, OzThread] = {}
        self.runq: deque = deque()
        self.next_tid = 1
        self.stats = Stats()
        self.browses: list = []
        self.browse_log: list = []
        self.bind_log: list = []
        self._reported_failures: set = set()
        self.store.on_bind = self._record_bind

    # -- bookkeeping -----------------------------------------------------

    def _record_bind(self, var: Var):
        self.bind_log.append((self.clock, var.vid))

    def trace(self, kind: str, **payload):
        if self.on_trace is not None:
            self.on_trace(kind, payload)

    def count_step(self):
        self.stats.reductions += 1
        if self.max_steps is not None and self.stats.reductions > self.max_steps:
            raise StepLimit()

    def browse(self, term: Term):
        text = render(self.store, term)
        self.browses.append(text)
        self.browse_log.append((self.clock, text))
        if self.on_browse is not None:
            self.on_browse(text)

    # -- thread management --------------------------------------------------

    def spawn(self, stmt, env) -> int:
        tid = self.next_tid
        self.next_tid += 1
        thread = OzThread(tid, None)
        thread.task = ThreadTask(self, thread)
        thread.task.push(stmt, env)
        self.threads[tid] = thread
        self.runq.append(tid)
        self.stats.spawned += 1
        self.trace("spawn", tid=tid)
        return tid

    def wake(self, tids):
        for tid in tids:
            t = self.threads.get(tid)
            if t is None or t.status != SUSPENDED:
                continue
            for v in t.waiting_on:
                self.store.drop_waiter(v, tid)
            t.waiting_on = []
            t.status = RUNNABLE
            self.runq.append(tid)
            self.trace("wake", tid=tid)

    def _park(self, thread: OzThread, susp: Suspend):
        woken: set[int] = set()
        thread.waiting_on = list(susp.vars)
        thread.byneed = susp.byneed
        for v in susp.vars:
            if susp.byneed:
                self.store.add_byneed_waiter(v, thread.tid)
            else:
                woken |= self.store.add_waiter(v, thread.tid)
        thread.status = SUSPENDED
        self.trace("suspend", tid=thread.tid,
                   vids=[v.vid for v in susp.vars], byneed=susp.byneed)
        if woken:
            self.wake(woken)

    def _sleep(self, thread: OzThread, ms: int):
        thread.status = SLEEPING
        thread.wake_at = self.clock + max(0, ms)
        self.trace("sleep", tid=thread.tid, until=thread.wake_at)

    def _finish(self, thread: OzThread, status: str, failure: Optional[str] = None):
        thread.status = status
        thread.failure = failure
        if thread.task.max_depth > self.stats.max_depth:
            self.stats.max_depth = thread.task.max_depth
        self.trace("exit", tid=thread.tid, status=status, failure=failure)

    # -- scheduling -----------------------------------------------------------

    def _pick(self) -> int:
        if self.policy == "random":
            i = self.rng.randrange(len(self.runq))
            self.runq.rotate(-i)
            tid = self.runq.popleft()
            self.runq.rotate(i)
            return tid
        return self.runq.popleft()

    def _slice(self, thread: OzThread):
        task = thread.task
        stack = task.stack
        stats = self.stats
        limit = self.max_steps
        stats.slices += 1
        self.trace("run", tid=thread.tid)
        for _ in range(TIMESLICE):
            if not stack:
                self._finish(thread, TERMINATED)
                return
            stmt, env = stack.pop()
            try:
                stats.reductions += 1
                if limit is not None and stats.reductions > limit:
                    raise StepLimit()
                exec_stmt(task, stmt, env)
            except Suspend as s:
                task.push(stmt, env)
                self._park(thread, s)
                return
            except SleepRequest as s:
                self._sleep(thread, s.ms)
                return
            except Failure as f:
                self._finish(thread, FAILED, f.reason)
                return
        if task.stack:
            self.runq.append(thread.tid)
        else:
            self._finish(thread, TERMINATED)

    def drain(self) -> None:
        """Run runnable threads until none is left.

        Unlike :meth:`run`, the clock is never advanced and no verdict is
        reached — the caller (a network simulation) owns time and decides
        when the whole system is quiescent.  ``StepLimit`` propagates."""
        while self.runq:
            tid = self._pick()
            thread = self.threads[tid]
            if thread.status == RUNNABLE:
                self._slice(thread)

    def next_wake(self) -> Optional[int]:
        """Earliest wake-up time among sleeping threads, or None."""
        wakes = [t.wake_at for t in self.threads.values()
                 if t.status == SLEEPING]
        return min(wakes) if wakes else None

    def wake_due(self) -> None:
        """Move sleepers whose time has come back onto the run queue."""
        for t in self.threads.values():
            if t.status == SLEEPING and t.wake_at <= self.clock:
                t.status = RUNNABLE
                t.wake_at = None
                self.runq.append(t.tid)

    def run(self) -> RunResult:
        status = "done"
        browse_base = len(self.browses)
        log_base = len(self.browse_log)
        try:
            while True:
                if self.runq:
                    tid = self._pick()
                    thread = self.threads[tid]
                    if thread.status == RUNNABLE:
                        self._slice(thread)
                    continue
                sleepers = [t for t in self.threads.values()
                            if t.status == SLEEPING]
                if sleepers:
                    wake_at = min(t.wake_at for t in sleepers)
                    if self.real_time and wake_at > self.clock:
                        _time.sleep((wake_at - self.clock) / 1000.0)
                    self.clock = max(self.clock, wake_at)
                    self.trace("clock", now=self.clock)
                    for t in sleepers:
                        if t.wake_at <= self.clock:
                            t.status = RUNNABLE
                            t.wake_at = None
                            self.runq.append(t.tid)
                    continue
                break
        except StepLimit:
            status = "limit"

        # Report each failed thread once: a later run() on the same
        # runtime (the interactive loop) should not repeat old news.
        failures = [t.failure for t in self.threads.values()
                    if t.status == FAILED
                    and t.tid not in self._reported_failures]
        self._reported_failures.update(
            t.tid for t in self.threads.values() if t.status == FAILED)
        # A thread parked until someone *needs* a value is an idle producer;
        # only threads stuck waiting for a value count as deadlocked.
        suspended = [(t.tid, [v.vid for v in t.waiting_on])
                     for t in self.threads.values()
                     if t.status == SUSPENDED and not t.byneed]
        idle = [t.tid for t in self.threads.values()
                if t.status == SUSPENDED and t.byneed]
        for t in self.threads.values():
            if t.task.max_depth > self.stats.max_depth:
                self.stats.max_depth = t.task.max_depth
        if status == "done":
            if failures:
                status = "failed"
            elif suspended:
                status = "deadlock"
        return RunResult(status, self.clock, self.browses[browse_base:],
                         self.browse_log[log_base:],
                         failures, suspended, self.stats, idle)
