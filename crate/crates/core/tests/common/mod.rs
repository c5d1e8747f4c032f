//! Frozen reference constants shared by the integration and acceptance
//! suites. Values are closed-form evaluations recorded at full printed
//! precision; keep them verbatim.

#![allow(dead_code)]
#![allow(clippy::excessive_precision)]

// --- Scalar-volatility model (CARA agent and principal, defaults
// --- gamma_a = gamma_p = h = 1) -------------------------------------------

/// Optimal sensitivity z* = gamma_p / (gamma_a + gamma_p).
pub const SV_Z_STAR: f64 = 0.5;
/// Optimal variance level: (2h + gamma_a z*)^(-1/2) = 2.5^(-1/2).
pub const SV_SIGMA_STAR: f64 = 0.63245553203367587;
/// Optimal volatility 2.5^(-1/4).
pub const SV_NU_STAR: f64 = 0.79527072876705067;
/// Optimal penalty rate Gamma* = -(2h + gamma_a z*).
pub const SV_GAMMA_BIG_STAR: f64 = -2.5;
/// Deterministic cost-to-go at time zero: b(0) = sqrt(2.5) * T, T = 1.
pub const SV_B0: f64 = 1.5811388300841897;
/// Principal value -exp(-(x0 - xi0 - b0)) at defaults.
pub const SV_V_P: f64 = -4.8604879304466749;
/// Agent value: the reservation utility.
pub const SV_V_A: f64 = -1.0;
/// Agent's variance response S*(gamma) = (-gamma)^(-1/2) at
/// gamma in {-1.5, -2, -4, -9} (z = 0).
pub const SV_S_STAR_AT: [(f64, f64); 4] = [
    (-1.5, 0.81649658092772603),
    (-2.0, 0.70710678118654752),
    (-4.0, 0.5),
    (-9.0, 0.33333333333333333),
];
/// Per-cell principal mean -exp(-(x0 - xi0 - f(z, S) T)) at (z, S) = (0.3, 0.5).
pub const SV_CELL_MEAN_Z03_S05: f64 = -5.1810099069485058;
/// Per-cell principal mean at (z, S) = (0.5, 1).
pub const SV_CELL_MEAN_Z05_S10: f64 = -5.7546026760057304;
/// Closed-form agent values of constant volatility deviations
/// u in {0.5, 0.7, 0.9, 1.0} against the penalty contract
/// (z*, Gamma*) = (0.5, -2.5).
pub const SV_DEVIATION_MEANS: [(f64, f64); 4] = [
    (0.5, -2.0779070681802731),
    (0.7, -1.0531327917031726),
    (0.9, -1.0498477152260811),
    (1.0, -1.1839557588361066),
];

// --- Demand-response model (defaults sigmas = [1,1], lambdas = [1,4],
// --- mus = [1,1], kappa = 1/2) --------------------------------------------

/// sigma_bar = sum_k sigma_k^2 / sqrt(lambda_k).
pub const DR_SIGMA_BAR: f64 = 1.5;
/// Volatility-control response b*(gamma) and total variance S*(gamma) at
/// gamma in {-1, -4}.
pub const DR_B_STAR_AT_M1: [f64; 2] = [1.0, 0.5];
pub const DR_S_STAR_AT_M1: f64 = 1.5;
pub const DR_B_STAR_AT_M4: [f64; 2] = [0.5, 0.25];
pub const DR_S_STAR_AT_M4: f64 = 0.75;
/// Inverse map gamma*(S) = -(sigma_bar / S)^2 at S = 0.75.
pub const DR_GAMMA_STAR_AT_075: f64 = -4.0;
/// Constrained Hamiltonian value at S = 1.5, z = 0 (x = y = 0).
pub const DR_H_C_AT_15_Z0: f64 = -0.75;

// --- Quartic counter-example ----------------------------------------------

/// First-best variance level argmax S^2 - S^3 = 2/3.
pub const Q_S_FB: f64 = 0.66666666666666667;
/// First-best principal total x0 - y0 - 23 T / 27 at T = 1, x0 = y0 = 0.
pub const Q_FB_TOTAL: f64 = -0.85185185185185185;
/// Best penalty-form total x0 - y0 - T.
pub const Q_RESTRICTED_TOTAL: f64 = -1.0;
/// Largest Fenchel gap, attained at S = 1/2.
pub const Q_MAX_GAP: f64 = 0.25;
pub const Q_GAP_WITNESS: f64 = 0.5;
