//! Runs one agent loop per configured category and feeds each harvest into
//! the analysis and dispatch step.

use std::collections::BTreeMap;
use std::sync::Arc;

use adwatch_core::clock::Clock;
use adwatch_core::fetch::Transport;
use adwatch_core::harvest::{run_agent_loop, AgentState, AgentStatus, CategoryAgentConfig, HarvestReport, StopSignal};
use adwatch_core::notify::{analyze_new, dispatch_pending, Gateway};
use adwatch_core::store::Datastore;
use parking_lot::Mutex;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostError {
    UnknownCategory,
    AlreadyRunning,
    NotRunning,
}

struct Running {
    stop: Arc<StopSignal>,
    task: JoinHandle<()>,
}

struct Slot {
    cfg: Arc<CategoryAgentConfig>,
    status: Arc<Mutex<AgentStatus>>,
    running: tokio::sync::Mutex<Option<Running>>,
}

/// Shared services handed to every agent.
#[derive(Clone)]
pub struct Services {
    pub store: Arc<Datastore>,
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<dyn Clock>,
    pub gateway: Arc<dyn Gateway>,
}

pub struct AgentHost {
    services: Services,
    slots: BTreeMap<String, Slot>,
    reports: mpsc::UnboundedSender<HarvestReport>,
    pipeline: JoinHandle<()>,
}

impl AgentHost {
    /// Must be called inside a tokio runtime: it spawns the worker that
    /// analyzes and dispatches after every harvest.
    pub fn new(services: Services, agents: Vec<CategoryAgentConfig>) -> Self {
        let slots = agents
            .into_iter()
            .map(|cfg| {
                let status = Arc::new(Mutex::new(AgentStatus::stopped(&cfg.category)));
                (cfg.category.clone(), Slot { cfg: Arc::new(cfg), status, running: tokio::sync::Mutex::new(None) })
            })
            .collect();
        let (tx, rx) = mpsc::unbounded_channel();
        let pipeline = tokio::spawn(pipeline_worker(services.clone(), rx));
        AgentHost { services, slots, reports: tx, pipeline }
    }

    pub fn services(&self) -> &Services {
        &self.services
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn statuses(&self) -> Vec<AgentStatus> {
        self.slots.values().map(|s| s.status.lock().clone()).collect()
    }

    pub fn status(&self, category: &str) -> Option<AgentStatus> {
        self.slots.get(category).map(|s| s.status.lock().clone())
    }

    pub async fn start(&self, category: &str) -> Result<AgentStatus, HostError> {
        let slot = self.slots.get(category).ok_or(HostError::UnknownCategory)?;
        let mut running = slot.running.lock().await;
        if running.as_ref().is_some_and(|r| !r.task.is_finished()) {
            return Err(HostError::AlreadyRunning);
        }
        let stop = Arc::new(StopSignal::new());
        {
            let mut s = slot.status.lock();
            s.state = AgentState::Running;
            s.next_run_at = None;
            s.error = None;
        }
        let task = tokio::spawn({
            let cfg = slot.cfg.clone();
            let status = slot.status.clone();
            let services = self.services.clone();
            let stop = stop.clone();
            let reports = self.reports.clone();
            async move {
                run_agent_loop(
                    &cfg,
                    services.transport.as_ref(),
                    &services.store,
                    services.clock.as_ref(),
                    &stop,
                    &status,
                    Some(&reports),
                )
                .await;
            }
        });
        *running = Some(Running { stop, task });
        Ok(slot.status.lock().clone())
    }

    /// Signals the loop and waits for it to wind down.
    pub async fn stop(&self, category: &str) -> Result<AgentStatus, HostError> {
        let slot = self.slots.get(category).ok_or(HostError::UnknownCategory)?;
        let mut running = slot.running.lock().await;
        let Some(r) = running.take().filter(|r| !r.task.is_finished()) else {
            return Err(HostError::NotRunning);
        };
        r.stop.stop();
        let _ = r.task.await;
        Ok(slot.status.lock().clone())
    }

    pub async fn stop_all(&self) {
        for category in self.slots.keys() {
            let _ = self.stop(category).await;
        }
    }
}

impl Drop for AgentHost {
    fn drop(&mut self) {
        self.pipeline.abort();
        for slot in self.slots.values() {
            if let Ok(mut running) = slot.running.try_lock() {
                if let Some(r) = running.take() {
                    r.stop.stop();
                    r.task.abort();
                }
            }
        }
    }
}

async fn pipeline_worker(services: Services, mut reports: mpsc::UnboundedReceiver<HarvestReport>) {
    while let Some(report) = reports.recv().await {
        let store = &services.store;
        match analyze_new(store, store.high_water(), services.clock.now()) {
            Ok(outcome) => tracing::info!(category = %report.category, created = outcome.created, "analysis done"),
            Err(e) => {
                tracing::error!(error = %e, "analysis failed");
                continue;
            }
        }
        match dispatch_pending(store, services.gateway.as_ref()).await {
            Ok(d) => tracing::info!(attempted = d.attempted, delivered = d.delivered, "dispatch done"),
            Err(e) => tracing::error!(error = %e, "dispatch failed"),
        }
    }
}
