//! Deterministic uniform-linear-array channels, imperfect CSIT and the warden link.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_complex_gaussian, ComplexVector, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub gains: Vec<f64>,
    /// Per-antenna phase increment of each user, radians.
    pub phases: Vec<f64>,
    /// Estimation-error exponents `α_k` in `σ_k² = g_k·P_t^{-α_k}`.
    pub error_dof: Vec<f64>,
    pub warden_gain: f64,
    pub warden_phase: f64,
    pub antennas: usize,
    pub warden_noise_var: f64,
}

impl ChannelParams {
    /// Three users, three antennas, the reference geometry used throughout the experiments.
    pub fn reference() -> Self {
        use std::f64::consts::PI;
        Self {
            gains: vec![1.0, 0.8, 0.2],
            phases: vec![0.0, PI / 9.0, 2.0 * PI / 9.0],
            error_dof: vec![0.6; 3],
            warden_gain: 0.4,
            warden_phase: PI / 6.0,
            antennas: 3,
            warden_noise_var: 1.0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.gains.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.gains.len();
        if k == 0 {
            return Err(Error::config("gains", "at least one user is required"));
        }
        if self.phases.len() != k {
            return Err(Error::config("phases", format!("expected {k} entries")));
        }
        if self.error_dof.len() != k {
            return Err(Error::config("error_dof", format!("expected {k} entries")));
        }
        if self.gains.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::config("gains", "every gain must be > 0"));
        }
        if self.phases.iter().chain(&self.error_dof).any(|v| !v.is_finite()) {
            return Err(Error::config("phases", "non-finite entry"));
        }
        if !(self.warden_gain > 0.0 && self.warden_gain.is_finite()) {
            return Err(Error::config("warden_gain", "must be > 0"));
        }
        if !(self.warden_noise_var > 0.0 && self.warden_noise_var.is_finite()) {
            return Err(Error::config("warden_noise_var", "must be > 0"));
        }
        if self.antennas < 1 {
            return Err(Error::config("antennas", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// `ĥ_k`, known to the transmitter.
    pub estimated: Vec<ComplexVector>,
    /// `h̃_k`.
    pub error: Vec<ComplexVector>,
    /// `h_k = ĥ_k + h̃_k`, the channel the receivers actually see.
    pub realized: Vec<ComplexVector>,
    pub warden: ComplexVector,
}

impl ChannelState {
    pub fn num_users(&self) -> usize {
        self.realized.len()
    }

    pub fn antennas(&self) -> usize {
        self.warden.len()
    }

    /// Channel state with no estimation error.
    pub fn exact(params: &ChannelParams) -> Result<Self> {
        params.validate()?;
        let m = params.antennas;
        let estimated = params
            .gains
            .iter()
            .zip(&params.phases)
            .map(|(&g, &phi)| realize_deterministic(g, phi, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            error: vec![ComplexVector::zeros(m); estimated.len()],
            realized: estimated.clone(),
            estimated,
            warden: realize_deterministic(params.warden_gain, params.warden_phase, m)?,
        })
    }
}

/// `g·[1, e^{jφ}, …, e^{j(M−1)φ}]`.
pub fn realize_deterministic(gain: f64, phase: f64, antennas: usize) -> Result<ComplexVector> {
    if antennas < 1 {
        return Err(Error::Dimension {
            what: "antenna count",
            expected: 1,
            got: 0,
        });
    }
    if !(gain >= 0.0) {
        return Err(Error::domain(format!("channel gain must be >= 0, got {gain}")));
    }
    Ok((0..antennas)
        .map(|m| Complex64::from_polar(gain, m as f64 * phase))
        .collect())
}

pub fn error_variance(gain: f64, total_power: f64, dof: f64) -> Result<f64> {
    if !(total_power > 0.0) {
        return Err(Error::domain(format!(
            "transmit power must be > 0, got {total_power}"
        )));
    }
    if !(gain >= 0.0) {
        return Err(Error::domain(format!("gain must be >= 0, got {gain}")));
    }
    Ok(gain * total_power.powf(-dof))
}

/// Fresh estimation errors around the deterministic channels.
pub fn draw_channel_state(
    params: &ChannelParams,
    total_power: f64,
    rng: &mut Rng,
) -> Result<ChannelState> {
    let mut state = ChannelState::exact(params)?;
    redraw_errors(&mut state, params, total_power, rng)?;
    Ok(state)
}

/// Replace `h̃_k` (and hence `h_k`) in place, leaving `ĥ_k` and `h_w` untouched.
pub fn redraw_errors(
    state: &mut ChannelState,
    params: &ChannelParams,
    total_power: f64,
    rng: &mut Rng,
) -> Result<()> {
    let m = params.antennas;
    for k in 0..params.num_users() {
        let var = error_variance(params.gains[k], total_power, params.error_dof[k])?;
        let err = sample_complex_gaussian(rng, var, m)?;
        state.realized[k] = state.estimated[k].try_add(&err)?;
        state.error[k] = err;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-12 && (a.im - im).abs() < 1e-12
    }

    #[test]
    fn deterministic_realizations() {
        let h = realize_deterministic(1.0, 0.0, 3).unwrap();
        assert!((0..3).all(|i| close(h[i], 1.0, 0.0)));

        let h = realize_deterministic(1.0, PI / 2.0, 3).unwrap();
        assert!(close(h[0], 1.0, 0.0));
        assert!(close(h[1], 0.0, 1.0));
        assert!(close(h[2], -1.0, 0.0));

        let h = realize_deterministic(0.4, PI / 6.0, 3).unwrap();
        assert!(close(h[1], 0.4 * (PI / 6.0).cos(), 0.4 * (PI / 6.0).sin()));
        assert!(close(h[2], 0.4 * (PI / 3.0).cos(), 0.4 * (PI / 3.0).sin()));

        assert!(matches!(
            realize_deterministic(1.0, 0.0, 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn error_variance_examples() {
        assert_eq!(error_variance(1.0, 1.0, 0.6).unwrap(), 1.0);
        // 100^-0.6 and 0.2·100^-0.6, mpmath
        assert!((error_variance(1.0, 100.0, 0.6).unwrap() - 0.06309573444801932).abs() < 1e-15);
        assert!((error_variance(0.2, 100.0, 0.6).unwrap() - 0.012619146889603865).abs() < 1e-15);
        assert!(error_variance(1.0, 0.0, 0.6).is_err());
        assert!(error_variance(1.0, -3.0, 0.6).is_err());
    }

    #[test]
    fn estimated_norm_is_exact() {
        let p = ChannelParams::reference();
        let s = ChannelState::exact(&p).unwrap();
        for (k, h) in s.estimated.iter().enumerate() {
            let expect = 3.0 * p.gains[k] * p.gains[k];
            assert!((h.norm_sqr() - expect).abs() < 1e-12);
        }
        assert!(s.estimated[0].entries().iter().all(|z| close(*z, 1.0, 0.0)));
        assert_eq!(s.realized, s.estimated);
    }

    #[test]
    fn zero_error_variance_keeps_estimate() {
        let mut p = ChannelParams::reference();
        // huge exponent drives P_t^{-α} to zero
        p.error_dof = vec![1e6; 3];
        let s = draw_channel_state(&p, 100.0, &mut Rng::new(1)).unwrap();
        assert_eq!(s.realized, s.estimated);
    }

    #[test]
    fn draw_is_deterministic_and_consistent() {
        let p = ChannelParams::reference();
        let a = draw_channel_state(&p, 100.0, &mut Rng::new(9)).unwrap();
        let b = draw_channel_state(&p, 100.0, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        for k in 0..3 {
            let sum = a.estimated[k].try_add(&a.error[k]).unwrap();
            assert_eq!(sum, a.realized[k]);
            assert_eq!(a.realized[k].len(), 3);
        }
        assert_eq!(a.warden.len(), 3);
    }

    #[test]
    fn empirical_error_variance() {
        let p = ChannelParams::reference();
        let mut rng = Rng::new(77);
        let mut state = ChannelState::exact(&p).unwrap();
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            redraw_errors(&mut state, &p, 100.0, &mut rng).unwrap();
            for (k, a) in acc.iter_mut().enumerate() {
                *a += state.error[k].norm_sqr() / 3.0;
            }
        }
        for k in 0..3 {
            let want = error_variance(p.gains[k], 100.0, 0.6).unwrap();
            let got = acc[k] / n as f64;
            assert!(((got - want) / want).abs() < 0.02, "user {k}: {got} vs {want}");
        }
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = ChannelParams::reference();
        p.gains[1] = 0.0;
        assert!(p.validate().is_err());
        let mut p = ChannelParams::reference();
        p.phases.pop();
        assert!(p.validate().is_err());
        let mut p = ChannelParams::reference();
        p.warden_noise_var = 0.0;
        assert!(p.validate().is_err());
    }
}
