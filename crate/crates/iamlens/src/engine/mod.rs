//! Orchestration of the enumeration models: single-principal, separate
//! per-credential, and cooperative cross-principal runs, with transitive
//! role assumption feeding role sessions back into the worker pool and the
//! GetAccountAuthorizationDetails short circuit pruning everything else.

pub mod env;
mod worker;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use iamlens_core::Arn;

use crate::backend::{ApiBackend, ApiError, ApiRequest, ApiResponse};
use crate::deepenum::ActionCatalog;
use crate::report::VisionReport;
use crate::session::{Credential, Session};

use env::EnvIamData;
use worker::Orchestrator;

pub use worker::derive_role_scope;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMode {
    /// One credential, its own facets only.
    Single,
    /// Every credential independently, one store each.
    Separate,
    /// One shared store per account; every session complements every
    /// target's facets.
    Cross,
}

impl std::fmt::Display for EnumerationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnumerationMode::Single => "single",
            EnumerationMode::Separate => "separate",
            EnumerationMode::Cross => "cross",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: EnumerationMode,
    pub tcrem_enabled: bool,
    pub simulation_enabled: bool,
    pub fuzz_enabled: bool,
    pub short_circuit_enabled: bool,
    /// Permits sweeps outside Single mode.
    pub force_sweeps: bool,
    pub max_role_depth: usize,
    pub worker_bound: usize,
    /// Deterministic single-worker scheduling; required for reproducible
    /// output. When false, one worker per session runs on real threads.
    pub deterministic: bool,
    pub seed: u64,
    pub catalog: Option<ActionCatalog>,
    /// Vendor-managed policy ARNs for the inverse fallback.
    pub vendor_arns: Vec<String>,
    pub record_journal: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: EnumerationMode::Cross,
            tcrem_enabled: true,
            simulation_enabled: false,
            fuzz_enabled: false,
            short_circuit_enabled: true,
            force_sweeps: false,
            max_role_depth: 8,
            worker_bound: 8,
            deterministic: true,
            seed: 0,
            catalog: None,
            vendor_arns: shipped_vendor_arns(),
            record_journal: false,
        }
    }
}

/// The vendor-managed ARN list shipped with the crate.
pub fn shipped_vendor_arns() -> Vec<String> {
    serde_json::from_str(crate::fixture::AWS_MANAGED_ARNS).expect("shipped ARN list parses")
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
}

impl RunOptions {
    pub fn validate(&self) -> Result<(), EngineError> {
        if (self.simulation_enabled || self.fuzz_enabled)
            && self.mode != EnumerationMode::Single
            && !self.force_sweeps
        {
            return Err(EngineError::Config(
                "simulation and fuzz sweeps are single-principal capabilities; \
                 pass the explicit override to combine them with other modes"
                    .into(),
            ));
        }
        if (self.simulation_enabled || self.fuzz_enabled) && self.catalog.is_none() {
            return Err(EngineError::Config("sweeps need an action catalog".into()));
        }
        if self.worker_bound == 0 {
            return Err(EngineError::Config("worker bound must be at least 1".into()));
        }
        Ok(())
    }
}

/// Valid credentials grouped by account id; invalid ones are reported and
/// dropped, never fatal.
pub struct Clusters {
    pub clusters: BTreeMap<String, Vec<Session>>,
    pub diagnostics: Vec<String>,
}

pub fn cluster_credentials(
    backend: &Arc<dyn ApiBackend>,
    credentials: Vec<Credential>,
) -> Clusters {
    let mut clusters: BTreeMap<String, Vec<Session>> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for credential in credentials {
        let key = credential.access_key_id.clone();
        match Session::open(Arc::clone(backend), credential) {
            Ok(session) => clusters.entry(session.account_id.clone()).or_default().push(session),
            Err(err) => diagnostics.push(format!("credential {key} dropped: {err}")),
        }
    }
    Clusters { clusters, diagnostics }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub reports: Vec<VisionReport>,
    pub diagnostics: Vec<String>,
    /// Backend calls consumed by this run.
    pub calls_made: u64,
    /// Merge journals per account, populated when requested.
    pub journals: Vec<Vec<env::MergeEvent>>,
}

/// Run the configured enumeration model over a set of credentials and
/// produce one report per valid user principal, in input order. Gaps are
/// encoded in the reports, never raised.
pub fn run(
    backend: Arc<dyn ApiBackend>,
    credentials: Vec<Credential>,
    options: &RunOptions,
) -> Result<RunOutcome, EngineError> {
    options.validate()?;
    let calls_before = backend.calls_made();
    let clustered = cluster_credentials(&backend, credentials);
    let mut diagnostics = clustered.diagnostics;
    let mut reports = Vec::new();
    let mut journals = Vec::new();

    if options.mode == EnumerationMode::Single {
        let total: usize = clustered.clusters.values().map(Vec::len).sum();
        if total > 1 {
            return Err(EngineError::Config(
                "single mode takes exactly one credential".into(),
            ));
        }
    }

    for (account_id, sessions) in clustered.clusters {
        match options.mode {
            EnumerationMode::Cross => {
                let targets: Vec<Arn> =
                    sessions.iter().map(|s| s.principal_arn.clone()).collect();
                let (env, notes) =
                    enumerate_account(&account_id, sessions, &targets, options);
                diagnostics.extend(notes);
                for target in &targets {
                    reports.push(crate::report::build_report(&env, target));
                }
                journals.push(env.journal().to_vec());
            }
            EnumerationMode::Single | EnumerationMode::Separate => {
                for session in sessions {
                    let targets = vec![session.principal_arn.clone()];
                    let (env, notes) =
                        enumerate_account(&account_id, vec![session], &targets, options);
                    diagnostics.extend(notes);
                    reports.push(crate::report::build_report(&env, &targets[0]));
                    journals.push(env.journal().to_vec());
                }
            }
        }
    }

    Ok(RunOutcome {
        reports,
        diagnostics,
        calls_made: backend.calls_made() - calls_before,
        journals,
    })
}

fn enumerate_account(
    account_id: &str,
    sessions: Vec<Session>,
    targets: &[Arn],
    options: &RunOptions,
) -> (EnvIamData, Vec<String>) {
    let mut store = EnvIamData::new(account_id);
    if options.record_journal {
        store = store.with_journal();
    }
    let mut orchestrator = Orchestrator::new(store, sessions, targets.to_vec(), options.clone());
    orchestrator.run();
    orchestrator.finish()
}

/// Issue a call with bounded retries on throttling. The fixture backend's
/// fault injection consumes a sequence slot per throttle, so immediate
/// retry makes progress; the live transport sleeps in its own executor.
pub(crate) fn call_retry(session: &Session, request: &ApiRequest) -> Result<ApiResponse, ApiError> {
    let mut attempts = 0;
    loop {
        match session.call(request) {
            Err(ApiError::Throttling { .. }) if attempts < 5 => attempts += 1,
            other => return other,
        }
    }
}
