//! End-to-end key-rate evaluation for one parameter point.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use crate::channel::{effective_rate_phase_averaged, x_window_rates, ExperimentParams, ProtocolParams, WindowRates};
use crate::chernoff::{EpsilonBudget, PostRejectionBounds};
use crate::decoy::{untagged_asymptotic, untagged_decoy, DecoyObservations, UntaggedStats};
use crate::error::{Error, Result};
use crate::postproc::{self, AoppOutcome, BferOutcome, KeyResult, OddSiftOutcome, ZWindowCounts};

/// Which key-length formula is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Averaged bit-flip error.
    Original,
    /// Bit-flip error refined by Bob's bit value.
    Refined,
    /// Random pairing with parity comparison.
    Bfer,
    /// Random pairing with parity comparison and finite-size bounds.
    BferFinite,
    /// Random pairing keeping odd-parity pairs only.
    OddSift,
    /// Actively odd-parity pairing.
    Aopp,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Original,
        Variant::Refined,
        Variant::Bfer,
        Variant::BferFinite,
        Variant::OddSift,
        Variant::Aopp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Refined => "refined",
            Variant::Bfer => "bfer",
            Variant::BferFinite => "bfer-finite",
            Variant::OddSift => "odd-sift",
            Variant::Aopp => "aopp",
        }
    }

    pub fn is_finite(self) -> bool {
        self == Variant::BferFinite
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key || (key == "finite" && *v == Variant::BferFinite))
            .ok_or_else(|| Error::InvalidParam {
                field: "variant",
                reason: format!("unknown variant {s:?}"),
            })
    }
}

/// Source of the untagged statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UntaggedSource {
    /// Exact single-photon yield and phase error.
    Exact,
    /// Vacuum + two-decoy bounds from expected decoy statistics.
    Decoy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub source: UntaggedSource,
    /// Adds the vacuum-window count to the original and refined formulas.
    pub vacuum_credit: bool,
    pub budget: EpsilonBudget,
}

impl PipelineConfig {
    pub fn asymptotic(variant: Variant) -> Self {
        Self {
            variant,
            source: UntaggedSource::Exact,
            vacuum_credit: false,
            budget: EpsilonBudget::standard(1e-10),
        }
    }

    pub fn finite(xi: f64) -> Self {
        Self {
            variant: Variant::BferFinite,
            source: UntaggedSource::Decoy,
            vacuum_credit: false,
            budget: EpsilonBudget::standard(xi),
        }
    }
}

/// Every intermediate quantity of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub proto: ProtocolParams,
    pub rates: WindowRates,
    pub decoy: Option<DecoyObservations>,
    pub counts: ZWindowCounts,
    pub untagged: UntaggedStats,
    pub bfer: Option<BferOutcome>,
    pub bounds: Option<PostRejectionBounds>,
    pub odd: Option<OddSiftOutcome>,
    pub aopp: Option<AoppOutcome>,
    pub key: KeyResult,
}

type DecoyKey = [u64; 3];

/// Evaluates key rates at a fixed distance, caching decoy statistics, which
/// depend only on the decoy intensities and the phase slice.
#[derive(Debug)]
pub struct Evaluator {
    pub exp: ExperimentParams,
    pub config: PipelineConfig,
    cache: Mutex<HashMap<DecoyKey, DecoyObservations>>,
}

impl Clone for Evaluator {
    fn clone(&self) -> Self {
        Self::new(self.exp, self.config)
    }
}

impl Evaluator {
    pub fn new(exp: ExperimentParams, config: PipelineConfig) -> Self {
        Self {
            exp,
            config,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn decoy_observations(&self, proto: &ProtocolParams, eta: f64) -> DecoyObservations {
        let key = [
            proto.mu1().to_bits(),
            proto.mu2().to_bits(),
            proto.slice_width.to_bits(),
        ];
        if let Some(obs) = self.cache.lock().expect("decoy cache poisoned").get(&key) {
            return *obs;
        }
        let one_sided = proto
            .decoy_intensities
            .map(|mu| effective_rate_phase_averaged(mu, 0.0, &self.exp, eta));
        let (_, t) = x_window_rates(proto.mu1(), proto.slice_width, &self.exp, eta);
        let obs = DecoyObservations {
            one_sided,
            slice_errors: t,
        };
        self.cache.lock().expect("decoy cache poisoned").insert(key, obs);
        obs
    }

    pub fn evaluate(&self, proto: &ProtocolParams) -> Result<Evaluation> {
        proto.validate()?;
        let exp = &self.exp;
        let n = exp.total_pulses;
        let f = exp.ec_inefficiency;
        let rates = WindowRates::signal_only(exp, proto);
        let (untagged, decoy) = match self.config.source {
            UntaggedSource::Exact => (untagged_asymptotic(exp, proto, &rates), None),
            UntaggedSource::Decoy => {
                let obs = self.decoy_observations(proto, rates.eta_arm);
                (untagged_decoy(exp, proto, &obs)?, Some(obs))
            }
        };
        let counts = postproc::z_window_counts(exp, proto, &rates);
        let mut eval = Evaluation {
            proto: *proto,
            rates,
            decoy,
            counts,
            untagged,
            bfer: None,
            bounds: None,
            odd: None,
            aopp: None,
            key: KeyResult::zero(n),
        };
        let credit = self.config.vacuum_credit;
        eval.key = match self.config.variant {
            Variant::Original => postproc::key_length_original(&counts, &untagged, f, credit, n)?,
            Variant::Refined => postproc::key_length_refined(&counts, &untagged, f, credit, n)?,
            Variant::Bfer => {
                let b = postproc::bfer_expectations(&counts, &untagged)?;
                eval.bfer = Some(b);
                postproc::key_length_bfer(&b, f, n)?
            }
            Variant::BferFinite => {
                let b = postproc::bfer_expectations(&counts, &untagged)?;
                let (key, bounds) = postproc::key_length_finite(&b, &untagged, &self.config.budget, f, n)?;
                eval.bfer = Some(b);
                eval.bounds = Some(bounds);
                key
            }
            Variant::OddSift => {
                let o = postproc::odd_parity_sift(&counts, &untagged)?;
                eval.odd = Some(o);
                postproc::key_length_odd_sift(&o, f, n)?
            }
            Variant::Aopp => {
                let a = postproc::aopp(&counts, &untagged)?;
                eval.aopp = Some(a);
                postproc::key_length_aopp(&a, f, n)?
            }
        };
        Ok(eval)
    }

    /// Signed key rate per pulse; `-inf` where the point is infeasible.
    pub fn objective(&self, proto: &ProtocolParams) -> f64 {
        match self.evaluate(proto) {
            Ok(e) if e.key.key_length.is_finite() => e.key.signed_rate(self.exp.total_pulses),
            _ => f64::NEG_INFINITY,
        }
    }
}

/// `-log2(1 - eta)` for total transmittance `eta_det * 10^(-alpha L / 10)`;
/// `None` when the transmittance is 1.
pub fn plob_bound(fiber_loss: f64, distance_km: f64, detector_efficiency: f64) -> Option<f64> {
    let eta = detector_efficiency * 10f64.powf(-fiber_loss * distance_km / 10.0);
    if eta >= 1.0 {
        None
    } else {
        Some(-(-eta).ln_1p() / std::f64::consts::LN_2)
    }
}
