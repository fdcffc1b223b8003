//! Physical-layer data: steering vectors, Rician user channels with UMa
//! path loss, target response matrices and the angular uncertainty grid.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dbm_to_mw, CMatrix, C64};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Scene geometry and link budget. Angles in degrees, powers in dBm,
/// carrier frequency in GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub carrier_freq_ghz: f64,
    pub tx_power_dbm: f64,
    pub noise_com_dbm: f64,
    pub noise_sen_dbm: f64,
    pub user_angles_deg: Vec<f64>,
    pub user_distances_m: Vec<f64>,
    pub target_angle_deg: f64,
    pub angle_uncertainty_deg: f64,
    pub n_angle_samples: usize,
    /// Linear Rician factor; `f64::INFINITY` gives pure line of sight.
    pub rician_factor: f64,
    pub radar_cross_section: f64,
    pub target_distance_m: f64,
    pub seed: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            n_antennas: 10,
            n_users: 5,
            carrier_freq_ghz: 71.0,
            tx_power_dbm: 36.0,
            noise_com_dbm: -84.0,
            noise_sen_dbm: -84.0,
            user_angles_deg: vec![30.0, 40.0, 50.0, 60.0, 70.0],
            user_distances_m: vec![40.0; 5],
            target_angle_deg: 120.0,
            angle_uncertainty_deg: 0.0,
            n_angle_samples: 33,
            rician_factor: 10.0,
            radar_cross_section: 1.0,
            target_distance_m: 20.0,
            seed: 0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1".into());
        }
        if self.n_angle_samples == 0 {
            return bad("n_angle_samples must be at least 1".into());
        }
        if self.user_angles_deg.len() != self.n_users {
            return bad(format!(
                "user_angles_deg has {} entries, n_users is {}",
                self.user_angles_deg.len(),
                self.n_users
            ));
        }
        if self.user_distances_m.len() != self.n_users {
            return bad(format!(
                "user_distances_m has {} entries, n_users is {}",
                self.user_distances_m.len(),
                self.n_users
            ));
        }
        if let Some(d) = self.user_distances_m.iter().find(|d| !(**d > 0.0)) {
            return bad(format!("user distance {d} must be positive"));
        }
        if !(self.carrier_freq_ghz > 0.0) {
            return bad("carrier_freq_ghz must be positive".into());
        }
        if !(self.target_distance_m > 0.0) || !(self.radar_cross_section > 0.0) {
            return bad("target_distance_m and radar_cross_section must be positive".into());
        }
        if !(self.rician_factor >= 0.0) {
            return bad("rician_factor must be nonnegative".into());
        }
        if !(self.angle_uncertainty_deg >= 0.0) {
            return bad("angle_uncertainty_deg must be nonnegative".into());
        }
        let finite = [
            self.tx_power_dbm,
            self.noise_com_dbm,
            self.noise_sen_dbm,
            self.target_angle_deg,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.user_angles_deg.iter().any(|v| !v.is_finite()) {
            return bad("powers and angles must be finite".into());
        }
        Ok(())
    }

    pub fn tx_power_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm)
    }

    pub fn noise_com_mw(&self) -> f64 {
        dbm_to_mw(self.noise_com_dbm)
    }

    pub fn noise_sen_mw(&self) -> f64 {
        dbm_to_mw(self.noise_sen_dbm)
    }
}

/// Everything the optimizer needs from the physical layer.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Per-user channel vectors in amplitude units (path loss applied).
    pub user_channels: Vec<Vec<C64>>,
    /// Normalized target SNR matrices `G~(theta)`, one per grid angle.
    pub target_matrices: Vec<CMatrix>,
    pub grid_deg: Vec<f64>,
    pub reflection: f64,
    pub pathloss_db: Vec<f64>,
}

/// Half-wavelength ULA response, entries `exp(j*pi*((2n-N-1)/2)*cos(theta))`.
pub fn steering_vector(theta_deg: f64, n: usize) -> Vec<C64> {
    let c = theta_deg.to_radians().cos();
    (1..=n)
        .map(|i| {
            let k = (2.0 * i as f64 - n as f64 - 1.0) / 2.0;
            C64::from_polar(1.0, PI * k * c)
        })
        .collect()
}

/// 3GPP UMa path loss in dB; `fc` in GHz.
pub fn uma_pathloss(distance_m: f64, fc_ghz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(fc_ghz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "path loss needs positive distance and frequency, got d={distance_m}, fc={fc_ghz}"
        )));
    }
    Ok(28.0 + 22.0 * distance_m.log10() + 20.0 * fc_ghz.log10())
}

/// Radar reflection coefficient `lambda^2 R / (64 pi^3 d^4)`.
pub fn reflection_coefficient(fc_ghz: f64, rcs: f64, distance_m: f64) -> Result<f64> {
    if !(fc_ghz > 0.0) || !(rcs > 0.0) || !(distance_m > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reflection coefficient needs positive inputs, got fc={fc_ghz}, R={rcs}, d={distance_m}"
        )));
    }
    let lambda = SPEED_OF_LIGHT / (fc_ghz * 1e9);
    Ok(lambda * lambda * rcs / (64.0 * PI.powi(3) * distance_m.powi(4)))
}

/// The PRNG stream for user `u`: one ChaCha stream per user under a shared
/// seed, so the draw of user `u` does not depend on how many users exist.
pub fn user_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// `CN(0, I)` draw of length `n`.
pub fn complex_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * s, im * s)
        })
        .collect()
}

/// Normalized small-scale fading `sqrt(K/(K+1)) a(beta) + sqrt(1/(K+1)) v`.
pub fn small_scale_fading<R: Rng + ?Sized>(
    los_angle_deg: f64,
    n: usize,
    k: f64,
    rng: &mut R,
) -> Vec<C64> {
    let los = steering_vector(los_angle_deg, n);
    let (w_los, w_nlos) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    };
    // The NLoS draw is always consumed so the stream position does not
    // depend on K.
    let nlos = complex_gaussian(n, rng);
    los.iter()
        .zip(&nlos)
        .map(|(a, v)| a * w_los + v * w_nlos)
        .collect()
}

/// Rician channel of user `user` (0-based), amplitude-scaled by UMa path loss.
pub fn rician_channel<R: Rng + ?Sized>(
    config: &GeometryConfig,
    user: usize,
    rng: &mut R,
) -> Result<Vec<C64>> {
    if user >= config.n_users {
        return Err(Error::InvalidInput(format!(
            "user index {user} out of range for {} users",
            config.n_users
        )));
    }
    let gamma_db = uma_pathloss(config.user_distances_m[user], config.carrier_freq_ghz)?;
    let amp = 10f64.powf(-gamma_db / 20.0);
    let v = small_scale_fading(
        config.user_angles_deg[user],
        config.n_antennas,
        config.rician_factor,
        rng,
    );
    Ok(v.into_iter().map(|z| z * amp).collect())
}

/// Uniform samples of `[theta - delta, theta + delta]`, deduplicated.
pub fn angle_grid(theta_deg: f64, delta_deg: f64, samples: usize) -> Vec<f64> {
    if samples <= 1 || delta_deg == 0.0 {
        return vec![theta_deg];
    }
    let step = 2.0 * delta_deg / (samples - 1) as f64;
    let mut grid: Vec<f64> = (0..samples)
        .map(|c| theta_deg - delta_deg + step * c as f64)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    grid
}

/// `G~(theta) = alpha a(theta) a(theta)^H / sigma^2` (linear units).
pub fn target_snr_matrix(theta_deg: f64, alpha: f64, noise_sen_mw: f64, n: usize) -> CMatrix {
    CMatrix::outer(&steering_vector(theta_deg, n), alpha / noise_sen_mw)
}

/// Builds the full channel set; a pure function of the config (including
/// its seed).
pub fn generate(config: &GeometryConfig) -> Result<ChannelSet> {
    config.validate()?;
    let n = config.n_antennas;
    let mut user_channels = Vec::with_capacity(config.n_users);
    let mut pathloss_db = Vec::with_capacity(config.n_users);
    for u in 0..config.n_users {
        let mut rng = user_rng(config.seed, u);
        user_channels.push(rician_channel(config, u, &mut rng)?);
        pathloss_db.push(uma_pathloss(
            config.user_distances_m[u],
            config.carrier_freq_ghz,
        )?);
    }
    let reflection = reflection_coefficient(
        config.carrier_freq_ghz,
        config.radar_cross_section,
        config.target_distance_m,
    )?;
    let grid_deg = angle_grid(
        config.target_angle_deg,
        config.angle_uncertainty_deg,
        config.n_angle_samples,
    );
    let noise_sen = config.noise_sen_mw();
    let target_matrices = grid_deg
        .iter()
        .map(|&t| target_snr_matrix(t, reflection, noise_sen, n))
        .collect();
    Ok(ChannelSet {
        user_channels,
        target_matrices,
        grid_deg,
        reflection,
        pathloss_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;

    #[test]
    fn steering_single_antenna_is_one() {
        let a = steering_vector(120.0, 1);
        assert_eq!(a.len(), 1);
        assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        for z in steering_vector(90.0, 5) {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_two_antennas_at_sixty_degrees() {
        let a = steering_vector(60.0, 2);
        assert!((a[0] - C64::from_polar(1.0, -PI / 4.0)).norm() < 1e-12);
        assert!((a[1] - C64::from_polar(1.0, PI / 4.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_conjugate_reversal() {
        for n in 1..9 {
            let a = steering_vector(37.3, n);
            for i in 0..n {
                assert!((a[i].norm() - 1.0).abs() < 1e-14);
                assert!((a[i] - a[n - 1 - i].conj()).norm() < 1e-12);
            }
            assert!((norm_sqr(&a) - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn pathloss_values() {
        assert!((uma_pathloss(1.0, 1.0).unwrap() - 28.0).abs() < 1e-12);
        let expect40 = 28.0 + 22.0 * 40f64.log10() + 20.0 * 71f64.log10();
        let got = uma_pathloss(40.0, 71.0).unwrap();
        assert!((got - expect40).abs() < 1e-12);
        assert!((got - 100.27).abs() < 0.01);
        assert!((uma_pathloss(10.0, 71.0).unwrap() - 87.03).abs() < 0.01);
        assert!(uma_pathloss(0.0, 71.0).is_err());
        assert!(uma_pathloss(10.0, -1.0).is_err());
    }

    #[test]
    fn reflection_values() {
        let a = reflection_coefficient(71.0, 1.0, 20.0).unwrap();
        assert!((a / 5.6e-14 - 1.0).abs() < 0.01, "alpha = {a}");
        let a2 = reflection_coefficient(71.0, 2.0, 20.0).unwrap();
        assert!((a2 / a - 2.0).abs() < 1e-12);
        let far = reflection_coefficient(71.0, 1.0, 40.0).unwrap();
        assert!((a / far - 16.0).abs() < 1e-9);
        let quad = reflection_coefficient(71.0, 1.0, 80.0).unwrap();
        assert!((a / quad - 256.0).abs() < 1e-9);
        assert!(reflection_coefficient(71.0, 0.0, 20.0).is_err());
    }

    #[test]
    fn grid_cases() {
        assert_eq!(angle_grid(120.0, 0.0, 33), vec![120.0]);
        assert_eq!(angle_grid(120.0, 8.0, 3), vec![112.0, 120.0, 128.0]);
        assert_eq!(angle_grid(120.0, 8.0, 1), vec![120.0]);
        let g = angle_grid(120.0, 8.0, 33);
        assert_eq!(g.len(), 33);
        assert!((g[0] - 112.0).abs() < 1e-12 && (g[32] - 128.0).abs() < 1e-12);
    }

    #[test]
    fn los_limit() {
        let mut cfg = GeometryConfig::default();
        cfg.rician_factor = f64::INFINITY;
        let mut rng = user_rng(3, 1);
        let h = rician_channel(&cfg, 1, &mut rng).unwrap();
        let amp = 10f64.powf(-uma_pathloss(40.0, 71.0).unwrap() / 20.0);
        let a = steering_vector(40.0, 10);
        for (x, y) in h.iter().zip(&a) {
            assert!((x - y * amp).norm() < 1e-20);
        }
    }

    #[test]
    fn nlos_only_is_scaled_gaussian_draw() {
        let mut cfg = GeometryConfig::default();
        cfg.rician_factor = 0.0;
        let h = rician_channel(&cfg, 0, &mut user_rng(5, 0)).unwrap();
        let v = complex_gaussian(10, &mut user_rng(5, 0));
        let amp = 10f64.powf(-uma_pathloss(40.0, 71.0).unwrap() / 20.0);
        for (x, y) in h.iter().zip(&v) {
            assert!((x - y * amp).norm() < 1e-20);
        }
    }

    #[test]
    fn fading_normalization_monte_carlo() {
        let n = 8;
        let draws = 100_000;
        let mut rng = user_rng(42, 0);
        let mean: f64 = (0..draws)
            .map(|_| norm_sqr(&small_scale_fading(50.0, n, 10.0, &mut rng)))
            .sum::<f64>()
            / draws as f64;
        assert!((mean / n as f64 - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn target_matrix_properties() {
        let m = target_snr_matrix(120.0, 2.0, 4.0, 1);
        assert!((m[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        let alpha = reflection_coefficient(71.0, 1.0, 20.0).unwrap();
        let noise = dbm_to_mw(-84.0);
        let g = target_snr_matrix(117.0, alpha, noise, 10);
        assert!(g.hermitian_residual() < 1e-12 * g.max_abs());
        assert!((g.trace().re / (alpha * 10.0 / noise) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic_and_user_streams_are_stable() {
        let mut cfg = GeometryConfig::default();
        cfg.seed = 11;
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.user_channels, b.user_channels);
        cfg.n_users = 3;
        cfg.user_angles_deg.truncate(3);
        cfg.user_distances_m.truncate(3);
        let c = generate(&cfg).unwrap();
        assert_eq!(&a.user_channels[..3], &c.user_channels[..]);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = GeometryConfig::default();
        cfg.user_distances_m[2] = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = GeometryConfig::default();
        cfg.user_angles_deg.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = GeometryConfig::default();
        cfg.n_antennas = 0;
        assert!(cfg.validate().is_err());
    }
}
