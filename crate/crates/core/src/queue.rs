//! In-process task queue between the orchestrator and the infrastructure
//! drivers.
//!
//! Tasks of one network service run strictly in enqueue order; tasks of
//! different services may interleave. A failing task is re-queued until it
//! has been attempted `max_retries + 1` times, then marked `FAILED` and
//! reported through [`TaskQueue::drain_failures`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{IdSeq, NsId, TaskId};
use crate::time::SimTime;

pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    DeployVnf,
    DeleteVnf,
    ReconfigureVnf,
    AllocateSlice,
    ReleaseSlice,
    RunActuator,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskState {
    Queued,
    Running,
    Done,
    Failed,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Done | TaskState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: TaskId,
    pub ns_id: NsId,
    pub kind: TaskKind,
    pub payload: BTreeMap<String, String>,
    pub attempts: u32,
    pub state: TaskState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
    #[serde(skip)]
    not_before: SimTime,
}

impl Task {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.payload.get(key).map(String::as_str)
    }
}

/// What the orchestrator hands to the queue; ids and counters are assigned
/// on enqueue.
#[derive(Debug, Clone, PartialEq)]
pub struct NewTask {
    pub ns_id: NsId,
    pub kind: TaskKind,
    pub payload: BTreeMap<String, String>,
}

impl NewTask {
    pub fn new(ns_id: NsId, kind: TaskKind) -> Self {
        NewTask {
            ns_id,
            kind,
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.payload.insert(key.to_string(), value.to_string());
        self
    }
}

/// Executes a task against the infrastructure. Implementations must be
/// idempotent: re-running the call of a completed task changes nothing.
pub trait TaskDriver {
    fn execute(&mut self, task: &Task) -> Result<(), String>;
}

impl<F: FnMut(&Task) -> Result<(), String>> TaskDriver for F {
    fn execute(&mut self, task: &Task) -> Result<(), String> {
        self(task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: TaskId,
    pub ns_id: NsId,
    pub kind: TaskKind,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LogOutcome {
    Done,
    Retry,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub at: SimTime,
    pub task_id: TaskId,
    pub ns_id: NsId,
    pub kind: TaskKind,
    pub attempt: u32,
    pub outcome: LogOutcome,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueueError {
    #[error("unknown or closed network service {0}")]
    UnknownNs(NsId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} is not running")]
    NotRunning(TaskId),
}

#[derive(Debug, Clone)]
pub struct TaskQueue {
    tasks: BTreeMap<TaskId, Task>,
    open: BTreeSet<NsId>,
    seq: IdSeq,
    max_retries: u32,
    backoff: SimTime,
    log: Vec<LogEntry>,
    failures: Vec<TaskFailure>,
}

impl Default for TaskQueue {
    fn default() -> Self {
        TaskQueue::new(DEFAULT_MAX_RETRIES, SimTime::ZERO)
    }
}

impl TaskQueue {
    pub fn new(max_retries: u32, backoff: SimTime) -> Self {
        TaskQueue {
            tasks: BTreeMap::new(),
            open: BTreeSet::new(),
            seq: IdSeq::starting_at(1),
            max_retries,
            backoff,
            log: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    /// Allows tasks to be enqueued for `ns`.
    pub fn open_ns(&mut self, ns: NsId) {
        self.open.insert(ns);
    }

    pub fn close_ns(&mut self, ns: NsId) {
        self.open.remove(&ns);
    }

    pub fn enqueue(&mut self, task: NewTask) -> Result<TaskId, QueueError> {
        if !self.open.contains(&task.ns_id) {
            return Err(QueueError::UnknownNs(task.ns_id));
        }
        let id = TaskId(self.seq.next_raw());
        self.tasks.insert(
            id,
            Task {
                task_id: id,
                ns_id: task.ns_id,
                kind: task.kind,
                payload: task.payload,
                attempts: 0,
                state: TaskState::Queued,
                last_error: None,
                not_before: SimTime::ZERO,
            },
        );
        Ok(id)
    }

    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.tasks.get(&id)
    }

    pub fn pending_for(&self, ns: NsId) -> usize {
        self.tasks
            .values()
            .filter(|t| t.ns_id == ns && !t.state.is_terminal())
            .count()
    }

    /// Every task ever enqueued for `ns`, oldest first.
    pub fn tasks_for(&self, ns: NsId) -> Vec<TaskId> {
        self.tasks.values().filter(|t| t.ns_id == ns).map(|t| t.task_id).collect()
    }

    pub fn is_idle(&self) -> bool {
        self.tasks.values().all(|t| t.state.is_terminal())
    }

    /// Takes the oldest queued task whose service has no earlier unfinished
    /// task, marking it `RUNNING`.
    pub fn claim_next(&mut self, now: SimTime) -> Option<Task> {
        let mut blocked = BTreeSet::new();
        let mut pick = None;
        for t in self.tasks.values() {
            if t.state.is_terminal() {
                continue;
            }
            if blocked.contains(&t.ns_id) {
                continue;
            }
            if t.state == TaskState::Queued && t.not_before <= now {
                pick = Some(t.task_id);
                break;
            }
            blocked.insert(t.ns_id);
        }
        let task = self.tasks.get_mut(&pick?)?;
        task.state = TaskState::Running;
        task.attempts += 1;
        Some(task.clone())
    }

    /// Records the outcome of a claimed task.
    pub fn complete(&mut self, id: TaskId, result: Result<(), String>, now: SimTime) -> Result<Task, QueueError> {
        let max_retries = self.max_retries;
        let task = self.tasks.get_mut(&id).ok_or(QueueError::UnknownTask(id))?;
        if task.state != TaskState::Running {
            return Err(QueueError::NotRunning(id));
        }
        let outcome = match result {
            Ok(()) => {
                task.state = TaskState::Done;
                task.last_error = None;
                LogOutcome::Done
            }
            Err(e) => {
                task.last_error = Some(e.clone());
                if task.attempts > max_retries {
                    task.state = TaskState::Failed;
                    self.failures.push(TaskFailure {
                        task_id: id,
                        ns_id: task.ns_id,
                        kind: task.kind,
                        attempts: task.attempts,
                        error: e,
                    });
                    LogOutcome::Failed
                } else {
                    task.state = TaskState::Queued;
                    task.not_before = now + self.backoff;
                    LogOutcome::Retry
                }
            }
        };
        self.log.push(LogEntry {
            at: now,
            task_id: id,
            ns_id: task.ns_id,
            kind: task.kind,
            attempt: task.attempts,
            outcome,
        });
        Ok(task.clone())
    }

    /// Claims, executes and completes one task. Returns the task in its new
    /// state, or `None` when nothing is eligible.
    pub fn run_worker_step(&mut self, driver: &mut dyn TaskDriver, now: SimTime) -> Option<Task> {
        let task = self.claim_next(now)?;
        let result = driver.execute(&task);
        self.complete(task.task_id, result, now).ok()
    }

    /// Fails every unfinished task of `ns` without running it.
    pub fn cancel_ns(&mut self, ns: NsId, reason: &str, now: SimTime) -> Vec<TaskId> {
        let mut cancelled = Vec::new();
        for t in self.tasks.values_mut() {
            if t.ns_id == ns && t.state == TaskState::Queued {
                t.state = TaskState::Failed;
                t.last_error = Some(reason.to_string());
                cancelled.push(t.task_id);
                self.log.push(LogEntry {
                    at: now,
                    task_id: t.task_id,
                    ns_id: ns,
                    kind: t.kind,
                    attempt: t.attempts,
                    outcome: LogOutcome::Cancelled,
                });
            }
        }
        cancelled
    }

    pub fn drain_failures(&mut self) -> Vec<TaskFailure> {
        std::mem::take(&mut self.failures)
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Execution log as line-delimited JSON.
    pub fn export_log(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entries serialize"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
