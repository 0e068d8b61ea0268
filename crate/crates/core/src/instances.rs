//! Samplers for the adversarial input distributions.
//!
//! Every family is supported in the unit ball of `L_p^{N1}(L_u^{N2})`:
//!
//! | variant | construction |
//! |---|---|
//! | `SingleSpike` | one entry `±N1^{1/p} N2^{1/u}` at a uniform position |
//! | `FullBernoulli` | every entry an independent uniform sign |
//! | `RowSpikes` | each row independently one entry `±N2^{1/u}` at a uniform column |
//! | `ActiveRowBernoulli` | one uniform row with independent entries `±N1^{1/p}`, other rows zero |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mixed_norm::{Extended, MixedMatrix, ProblemSpec};
use crate::rng::RngStream;

/// Default constant of the regime guard `n < c0 N1 N2`.
pub const DEFAULT_REGIME_C0: f64 = 1.0 / 21.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    SingleSpike,
    FullBernoulli,
    RowSpikes,
    ActiveRowBernoulli,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::SingleSpike,
        Variant::FullBernoulli,
        Variant::RowSpikes,
        Variant::ActiveRowBernoulli,
    ];

    /// Short name used on the command line and in CSV output.
    pub fn short_name(self) -> &'static str {
        match self {
            Variant::SingleSpike => "mu1",
            Variant::FullBernoulli => "mu2",
            Variant::RowSpikes => "mu3",
            Variant::ActiveRowBernoulli => "mu4",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mu1" | "single_spike" => Ok(Variant::SingleSpike),
            "mu2" | "full_bernoulli" => Ok(Variant::FullBernoulli),
            "mu3" | "row_spikes" => Ok(Variant::RowSpikes),
            "mu4" | "active_row_bernoulli" => Ok(Variant::ActiveRowBernoulli),
            _ => Err(Error::InvalidParameters(format!("unknown family {s:?}"))),
        }
    }
}

/// A hard-instance distribution on a fixed space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardFamily {
    variant: Variant,
    spec: ProblemSpec,
}

impl HardFamily {
    pub fn new(variant: Variant, spec: ProblemSpec) -> Result<Self> {
        if variant == Variant::ActiveRowBernoulli && spec.p().is_inf() {
            return Err(Error::InvalidExponent(
                "the active-row family needs a finite p".into(),
            ));
        }
        Ok(HardFamily { variant, spec })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn sample(&self, rng: &mut RngStream) -> MixedMatrix {
        match self.variant {
            Variant::SingleSpike => sample_single_spike(&self.spec, rng),
            Variant::FullBernoulli => sample_full_bernoulli(&self.spec, rng),
            Variant::RowSpikes => sample_row_spikes(&self.spec, rng),
            Variant::ActiveRowBernoulli => {
                sample_active_row(&self.spec, rng).expect("finite p checked at construction")
            }
        }
    }
}

/// `n < c0 N1 N2`.
pub fn check_regime(spec: &ProblemSpec, n: usize, c0: f64) -> Result<()> {
    let limit = c0 * spec.entry_count() as f64;
    // the relative slack keeps exact boundary cases like c0 = 1/21 strict
    if (n as f64) < limit * (1.0 - 1e-12) {
        Ok(())
    } else {
        Err(Error::RegimeViolation(format!(
            "n = {n} is not below c0 N1 N2 = {c0} * {} * {} = {limit}",
            spec.n1(),
            spec.n2()
        )))
    }
}

pub fn sample_single_spike(spec: &ProblemSpec, rng: &mut RngStream) -> MixedMatrix {
    let height =
        (spec.n1() as f64).powf(spec.p().recip()) * (spec.n2() as f64).powf(spec.u().recip());
    let mut f = MixedMatrix::zeros(*spec);
    let k = rng.index(spec.entry_count());
    let sign = rng.sign();
    f.set(k / spec.n2(), k % spec.n2(), sign * height);
    f
}

pub fn sample_full_bernoulli(spec: &ProblemSpec, rng: &mut RngStream) -> MixedMatrix {
    let entries = (0..spec.entry_count()).map(|_| rng.sign()).collect();
    MixedMatrix::new(*spec, entries).expect("signs are finite")
}

pub fn sample_row_spikes(spec: &ProblemSpec, rng: &mut RngStream) -> MixedMatrix {
    let height = (spec.n2() as f64).powf(spec.u().recip());
    let mut f = MixedMatrix::zeros(*spec);
    for i in 0..spec.n1() {
        let j = rng.index(spec.n2());
        let sign = rng.sign();
        f.set(i, j, sign * height);
    }
    f
}

pub fn sample_active_row(spec: &ProblemSpec, rng: &mut RngStream) -> Result<MixedMatrix> {
    let Extended::Finite(p) = spec.p() else {
        return Err(Error::InvalidExponent(
            "the active-row family needs a finite p".into(),
        ));
    };
    let height = (spec.n1() as f64).powf(1.0 / p);
    let mut f = MixedMatrix::zeros(*spec);
    let row = rng.index(spec.n1());
    for j in 0..spec.n2() {
        let sign = rng.sign();
        f.set(row, j, sign * height);
    }
    Ok(f)
}
