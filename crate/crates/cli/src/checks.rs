use rmpflow::lyapunov::{self, DecayMode, DecayReport, ImmersionReport, InvariantSetKind, InvariantSetReport, InvariantSetTolerances};
use rmpflow::{NodeState, Result, Scenario};

/// Leaf-energy decomposition tolerance, relative to `max(1, |V_r|)`.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckSelection {
    pub decay: bool,
    pub invariant_set: bool,
    pub immersion: bool,
}

impl CheckSelection {
    pub fn all() -> Self {
        Self {
            decay: true,
            invariant_set: true,
            immersion: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.decay || self.invariant_set || self.immersion)
    }
}

#[derive(Debug, Clone)]
pub enum CheckOutcome {
    Decay(DecayReport),
    InvariantSet {
        report: InvariantSetReport,
        tol: InvariantSetTolerances,
    },
    /// Advisory; never fails a run.
    Immersion(ImmersionReport),
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        match self {
            CheckOutcome::Decay(r) => r.passed && r.max_decomposition_error <= DECOMPOSITION_TOLERANCE,
            CheckOutcome::InvariantSet { report, tol } => invariant_ok(report, tol),
            CheckOutcome::Immersion(_) => true,
        }
    }

    /// Summary-table lines, newline terminated.
    pub fn render(&self) -> String {
        match self {
            CheckOutcome::Decay(r) => {
                let label = match r.mode {
                    DecayMode::Equality => "energy decay (all-GDS equality)",
                    DecayMode::Bound => "energy decay bound (CLF leaves)",
                };
                let note = if r.heuristic { " [time-varying nominal: heuristic]" } else { "" };
                format!(
                    "{label}: {}  ({:.2}% of steps within tolerance, max violation {:.3e} at t={:.3}){note}\n\
                     leaf energy decomposition: {}  (max relative error {:.3e})\n",
                    verdict(r.passed),
                    100.0 * r.pass_fraction,
                    r.max_violation,
                    r.worst_time,
                    verdict(r.max_decomposition_error <= DECOMPOSITION_TOLERANCE),
                    r.max_decomposition_error,
                )
            }
            CheckOutcome::InvariantSet { report, tol } => format!(
                "convergence to invariant set: {}  (|qdot| {:.3e}, |sum J^T f| {:.3e}, |grad Phi_r| {:.3e}; tolerances {:.0e}, {:.0e}, {:.0e})\n",
                verdict(invariant_ok(report, tol)),
                report.velocity_norm,
                report.force_sum_norm,
                report.potential_gradient_norm,
                tol.velocity,
                tol.force_sum,
                tol.potential_gradient,
            ),
            CheckOutcome::Immersion(r) => format!(
                "task-map immersion (advisory): {}  (min singular value {:.3e}, {} warnings)\n",
                if r.full_rank { "PASS" } else { "WARN" },
                r.min_singular_value,
                r.warnings.len(),
            ),
        }
    }
}

fn invariant_ok(r: &InvariantSetReport, tol: &InvariantSetTolerances) -> bool {
    r.velocity_norm < tol.velocity && r.force_sum_norm < tol.force_sum && r.potential_gradient_norm < tol.potential_gradient
}

pub fn run_checks(scenario: &Scenario, times: &[f64], states: &[NodeState], sel: CheckSelection) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    if sel.decay {
        out.push(CheckOutcome::Decay(lyapunov::check_decay(&scenario.tree, times, states)?));
    }
    if sel.invariant_set {
        let (Some(state), Some(&t)) = (states.last(), times.last()) else {
            return Err(rmpflow::Error::Verification("empty trajectory".into()));
        };
        let tol = InvariantSetTolerances::default();
        let report = lyapunov::check_invariant_set(&scenario.tree, state, t, InvariantSetKind::ForceBalance, tol)?;
        out.push(CheckOutcome::InvariantSet { report, tol });
    }
    if sel.immersion {
        out.push(CheckOutcome::Immersion(lyapunov::check_immersion(&scenario.tree, states)));
    }
    Ok(out)
}
