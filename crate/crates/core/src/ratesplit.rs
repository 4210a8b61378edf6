//! SINRs of the common and private streams and the rates they support.
//!
//! Rates in the finite-blocklength regime use the normal approximation
//!
//! ```text
//! R(γ, l, δ) = log2(1+γ) − sqrt(γ(γ+2) / (l(γ+1)²))·Q⁻¹(δ)/ln 2 + log2(l)/(2l)
//! ```
//!
//! clamped at zero, with `R = 0` whenever `γ = 0`. A segment shorter than
//! [`MIN_BLOCKLENGTH`] carries no rate.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::numerics::{q_inverse, ComplexVector};

/// Shortest blocklength (channel uses) for which the normal approximation is used.
pub const MIN_BLOCKLENGTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    /// Finite blocklength, covert constraint active.
    Fbl,
    /// Infinite blocklength (Shannon rates), covert constraint dropped.
    Ibl,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Fbl => "FBL",
            Regime::Ibl => "IBL",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fbl" => Ok(Regime::Fbl),
            "ibl" => Ok(Regime::Ibl),
            other => Err(Error::domain(format!("unknown regime `{other}` (expected FBL or IBL)"))),
        }
    }
}

/// Common precoder `p_c` and private precoders `p_1..p_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub common: ComplexVector,
    pub privates: Vec<ComplexVector>,
}

impl Beamformer {
    pub fn new(common: ComplexVector, privates: Vec<ComplexVector>) -> Result<Self> {
        for p in &privates {
            Error::check_len("private precoder", common.len(), p.len())?;
        }
        Ok(Self { common, privates })
    }

    pub fn zeros(users: usize, antennas: usize) -> Self {
        Self {
            common: ComplexVector::zeros(antennas),
            privates: vec![ComplexVector::zeros(antennas); users],
        }
    }

    /// `tr(P P^H) = ‖p_c‖² + Σ‖p_k‖²`.
    pub fn total_power(&self) -> f64 {
        self.common.norm_sqr() + self.privates.iter().map(|p| p.norm_sqr()).sum::<f64>()
    }

    pub fn without_common(&self) -> Self {
        Self {
            common: ComplexVector::zeros(self.common.len()),
            privates: self.privates.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitLengths {
    pub common: Vec<f64>,
    pub private: Vec<f64>,
}

impl SplitLengths {
    pub fn new(common: Vec<f64>, private: Vec<f64>) -> Result<Self> {
        Error::check_len("split lengths", common.len(), private.len())?;
        if common.iter().chain(&private).any(|&l| !(l >= 0.0)) {
            return Err(Error::domain("split lengths must be >= 0"));
        }
        Ok(Self { common, private })
    }

    /// Everything private: `l_k^c = 0`, `l_k^p = L_k`.
    pub fn all_private(totals: &[f64]) -> Self {
        Self {
            common: vec![0.0; totals.len()],
            private: totals.to_vec(),
        }
    }

    pub fn totals(&self) -> Vec<f64> {
        self.common.iter().zip(&self.private).map(|(c, p)| c + p).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sinr_common: Vec<f64>,
    pub sinr_private: Vec<f64>,
    pub common_rate: f64,
    pub common_shares: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub totals: Vec<f64>,
    pub sum_rate: f64,
    pub min_rate: f64,
}

/// `(γ_k^c, γ_k^p)` for user `k` under SIC: the common stream sees every
/// private stream as interference, the private stream sees the other privates.
pub fn sinr(channel: &ChannelState, bf: &Beamformer, k: usize) -> Result<(f64, f64)> {
    let users = channel.num_users();
    Error::check_len("private precoders", users, bf.privates.len())?;
    if k >= users {
        return Err(Error::Dimension {
            what: "user index",
            expected: users,
            got: k,
        });
    }
    let h = &channel.realized[k];
    let common = h.inner(&bf.common)?.norm_sqr();
    let mut own = 0.0;
    let mut others = 0.0;
    for (j, p) in bf.privates.iter().enumerate() {
        let g = h.inner(p)?.norm_sqr();
        if j == k {
            own = g;
        } else {
            others += g;
        }
    }
    Ok((common / (own + others + 1.0), own / (others + 1.0)))
}

pub fn shannon_rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

thread_local! {
    static LAST_Q_INVERSE: std::cell::Cell<(u64, f64)> = const { std::cell::Cell::new((u64::MAX, 0.0)) };
}

/// `q_inverse` memoized on the last argument; callers almost always reuse one δ.
fn cached_q_inverse(p: f64) -> Result<f64> {
    let (bits, value) = LAST_Q_INVERSE.get();
    if bits == p.to_bits() {
        return Ok(value);
    }
    let value = q_inverse(p)?;
    LAST_Q_INVERSE.set((p.to_bits(), value));
    Ok(value)
}

/// Normal-approximation rate in bits per channel use.
pub fn fbl_rate(sinr: f64, blocklength: f64, error_prob: f64) -> Result<f64> {
    if !(sinr >= 0.0) || !sinr.is_finite() {
        return Err(Error::domain(format!("SINR must be finite and >= 0, got {sinr}")));
    }
    if !(blocklength >= MIN_BLOCKLENGTH) || !blocklength.is_finite() {
        return Err(Error::domain(format!(
            "blocklength {blocklength} below the minimum {MIN_BLOCKLENGTH}"
        )));
    }
    let qinv = cached_q_inverse(error_prob)?;
    if sinr == 0.0 {
        return Ok(0.0);
    }
    let dispersion = sinr * (sinr + 2.0) / (blocklength * (sinr + 1.0).powi(2));
    let raw = shannon_rate(sinr) - dispersion.sqrt() * qinv / LN_2
        + blocklength.log2() / (2.0 * blocklength);
    Ok(raw.max(0.0))
}

fn segment_rate(sinr: f64, blocklength: f64, error_prob: f64, regime: Regime) -> Result<f64> {
    match regime {
        Regime::Ibl => Ok(shannon_rate(sinr)),
        Regime::Fbl if blocklength < MIN_BLOCKLENGTH => Ok(0.0),
        Regime::Fbl => fbl_rate(sinr, blocklength, error_prob),
    }
}

fn check_inputs(
    channel: &ChannelState,
    lens: &SplitLengths,
    error_probs: &[f64],
) -> Result<usize> {
    let k = channel.num_users();
    Error::check_len("common lengths", k, lens.common.len())?;
    Error::check_len("private lengths", k, lens.private.len())?;
    Error::check_len("decoding error probabilities", k, error_probs.len())?;
    Ok(k)
}

/// Rate of the common stream: the minimum over users, so every user decodes it.
pub fn common_rate(
    channel: &ChannelState,
    bf: &Beamformer,
    lens: &SplitLengths,
    error_probs: &[f64],
    regime: Regime,
) -> Result<f64> {
    let k = check_inputs(channel, lens, error_probs)?;
    let mut rate = f64::INFINITY;
    for u in 0..k {
        let (gc, _) = sinr(channel, bf, u)?;
        rate = rate.min(segment_rate(gc, lens.common[u], error_probs[u], regime)?);
    }
    Ok(rate)
}

pub fn rate_report(
    channel: &ChannelState,
    bf: &Beamformer,
    lens: &SplitLengths,
    shares: &[f64],
    error_probs: &[f64],
    regime: Regime,
) -> Result<RateReport> {
    let k = check_inputs(channel, lens, error_probs)?;
    Error::check_len("common-rate shares", k, shares.len())?;
    if shares.iter().any(|&s| !(s >= 0.0)) || shares.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::domain("shares must be >= 0 and sum to at most 1"));
    }

    let mut sinr_common = Vec::with_capacity(k);
    let mut sinr_private = Vec::with_capacity(k);
    let mut private_rates = Vec::with_capacity(k);
    let mut common = f64::INFINITY;
    for u in 0..k {
        let (gc, gp) = sinr(channel, bf, u)?;
        common = common.min(segment_rate(gc, lens.common[u], error_probs[u], regime)?);
        private_rates.push(segment_rate(gp, lens.private[u], error_probs[u], regime)?);
        sinr_common.push(gc);
        sinr_private.push(gp);
    }

    let common_shares: Vec<f64> = shares.iter().map(|s| s * common).collect();
    let totals: Vec<f64> = common_shares
        .iter()
        .zip(&private_rates)
        .map(|(c, p)| c + p)
        .collect();
    let sum_rate = totals.iter().sum();
    let min_rate = totals.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(RateReport {
        sinr_common,
        sinr_private,
        common_rate: common,
        common_shares,
        private_rates,
        totals,
        sum_rate,
        min_rate,
    })
}

/// SDMA: private streams only, interference treated as noise.
pub fn sdma_report(
    channel: &ChannelState,
    privates: &[ComplexVector],
    totals: &[f64],
    error_probs: &[f64],
    regime: Regime,
) -> Result<RateReport> {
    let antennas = channel.antennas();
    let bf = Beamformer::new(ComplexVector::zeros(antennas), privates.to_vec())?;
    let lens = SplitLengths::all_private(totals);
    rate_report(
        channel,
        &bf,
        &lens,
        &vec![0.0; privates.len()],
        error_probs,
        regime,
    )
}
