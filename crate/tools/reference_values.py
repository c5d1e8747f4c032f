#!/usr/bin/env python3
"""Independent reference values for the test suite.

Computes, in 30-digit arithmetic, every closed-form quantity that the Rust
tests assert against, straight from the mathematical definitions of the three
built-in models. Run it to regenerate the constants embedded in
crates/core/tests/common/mod.rs; values are printed to 17 significant digits
(enough to round-trip an IEEE-754 double).

The three models:

  scalar-vol      dX = u dW, u in (0,1], agent cost c(u) = u^-2 / 2,
                  CARA utilities (gamma_a, gamma_p), principal running cost
                  h * S on the quadratic-variation density S.
  demand-response dX = -(a_1+a_2) dt + sum_k sigma_k sqrt(b_k) dW^k,
                  cost c1(a) + c2(b)/2 with c1 = sum a_k^2/(2 mu_k),
                  c2 = sum sigma_k^2/(lambda_k b_k); agent is paid kappa*X;
                  CARA utilities; principal pays theta*X + h S / 2.
  quartic         dX = u dW, u in [-1,1], cost c(u) = 1 - u^4, linear
                  utilities, principal running cost c_P(S) = S^3.

Hamiltonians (d = 1, scalar output):
  H_A(z, gamma)  = sup_u { drift(u) z + gamma var(u)/2 - cost(u) }
  H_A_c(z, S)    = sup_{u : var(u) = S} { drift(u) z - cost(u) }
with the Legendre-Fenchel link H_A(gamma) = sup_S { H_A_c(S) + gamma S / 2 }
and biconjugate check(S) = inf_gamma { H_A(gamma) - gamma S / 2 }.
"""

from mpmath import mp, mpf, sqrt, exp, log, nstr

mp.dps = 30


def fmt(name: str, value) -> None:
    print(f"  {name:<34} = {nstr(mpf(value), 17, strip_zeros=False)}")


# ----------------------------------------------------------------------------
# scalar-vol: defaults gamma_a = gamma_p = h = T = 1, x0 = 0, R_A = -1
# ----------------------------------------------------------------------------
print("[scalar-vol] gamma_a=1 gamma_p=1 h=1 T=1 x0=0 R_A=-1")
ga, gp, h, T, x0, ra = mpf(1), mpf(1), mpf(1), mpf(1), mpf(0), mpf(-1)

gamma_bar = gp / (gp + ga)          # optimal risk-sharing slope z*
risk = ga * gamma_bar               # R = gamma_a * gamma_bar
c = 2 * h + risk                    # curvature constant 2h + R
z_star = gamma_bar
sigma_star = min(mpf(1), 1 / sqrt(c))       # optimal variance, capped at 1
nu_star = min(mpf(1), c ** mpf("-0.25"))    # optimal control, capped at 1
gamma_big_star = -max(mpf(1), c)            # Gamma* = -(1 v c)
# certainty-equivalent running minimum over (z, S):
#   f(z,S) = gamma_p (1-z)^2 S/2 + gamma_a z^2 S/2 + 1/(2S) + h S,
# minimized at (z*, sigma_star); b(0) = f* T is the principal's total cost.
f_star = (gp * (1 - z_star) ** 2 * sigma_star / 2
          + ga * z_star ** 2 * sigma_star / 2
          + 1 / (2 * sigma_star) + h * sigma_star)
b0 = f_star * T
xi0 = -log(-ra) / ga                # U_A^{-1}(R_A)
v_p = -exp(-gp * (x0 - xi0 - b0))

fmt("gamma_bar", gamma_bar)
fmt("two_h_plus_r", c)
fmt("z_star", z_star)
fmt("sigma_star", sigma_star)
fmt("nu_star", nu_star)
fmt("gamma_big_star", gamma_big_star)
fmt("b0", b0)
fmt("xi0", xi0)
fmt("v_p", v_p)
fmt("v_a", ra)


def sv_hamiltonian(gamma):
    """H_A(gamma) = sup_{u in (0,1]} { gamma u^2 - u^-2 } / 2."""
    if gamma <= -1:
        return -sqrt(-gamma)
    return (gamma - 1) / 2


def sv_u_star(gamma):
    if gamma <= -1:
        return (-gamma) ** mpf("-0.25")
    return mpf(1)


fmt("h_a_at_-4", sv_hamiltonian(mpf(-4)))
fmt("u_star_at_-4", sv_u_star(mpf(-4)))
fmt("h_a_at_-2.5", sv_hamiltonian(mpf("-2.5")))
fmt("h_a_at_-0.5", sv_hamiltonian(mpf("-0.5")))
# H_A_c(S) = -1/(2S), u°(S) = sqrt(S)
for s in ("0.4", "0.5", "1"):
    fmt(f"h_c_at_{s}", -1 / (2 * mpf(s)))
# correspondence S*(gamma) = (-gamma)^{-1/2} ^ 1, gamma*(S) = -S^-2
for g in ("-1.5", "-2", "-4", "-9"):
    fmt(f"s_star_at_{g}", min(mpf(1), 1 / sqrt(-mpf(g))))
fmt("gamma_star_at_0.5", -mpf("0.5") ** -2)

# Per-cell principal objective under constant (z, S), on-policy:
#   E U_P = -exp(-gamma_p (x0 - xi0 - f(z,S) T)).
def sv_cell(z, s):
    f = (gp * (1 - z) ** 2 * s / 2 + ga * z ** 2 * s / 2
         + 1 / (2 * s) + h * s)
    return -exp(-gp * (x0 - xi0 - f * T))


fmt("cell_mean_at_optimum", sv_cell(z_star, sigma_star))
fmt("cell_mean_z0.3_s0.5", sv_cell(mpf("0.3"), mpf("0.5")))
fmt("cell_mean_z0.5_s1", sv_cell(mpf("0.5"), mpf(1)))

# Agent's expected CARA payoff when forced to play constant u under the
# unconstrained contract (y0 = -1, Gamma = Gamma*, any Z):
#   E U_A = -exp(-gamma_a (xi0 + D T)),
#   D = Gamma u^2 / 2 - H_A(Gamma) - u^-2 / 2.
for u in ("0.5", "0.7", "0.9", "1.0"):
    uu = mpf(u)
    d = (gamma_big_star * uu ** 2 / 2 - sv_hamiltonian(gamma_big_star)
         - uu ** -2 / 2)
    fmt(f"deviation_mean_u{u}", -exp(-ga * (xi0 + d * T)))

# ----------------------------------------------------------------------------
# demand-response: sigma=(1,1), lambda=(1,4), mu=(1,1); kappa=0.5, theta=1,
# h=1, gamma_a=gamma_p=1 are the illustrative defaults (agent-side maps do
# not depend on kappa/theta/h).
# ----------------------------------------------------------------------------
print("[demand-response] sigma=(1,1) lambda=(1,4) mu=(1,1) kappa=0.5")
sig = [mpf(1), mpf(1)]
lam = [mpf(1), mpf(4)]
mu = [mpf(1), mpf(1)]
kappa = mpf("0.5")

sigma_bar = sum(s ** 2 / sqrt(l) for s, l in zip(sig, lam))
mu_bar = sum(mu)
fmt("sigma_bar", sigma_bar)
fmt("mu_bar", mu_bar)

a = [mpf("0.3"), mpf("0.3")]
b = [mpf(1), mpf("0.5")]
variance = sum(s ** 2 * bk for s, bk in zip(sig, b))
drift = -sum(a)
c1 = sum(ak ** 2 / (2 * mk) for ak, mk in zip(a, mu))
c2 = sum(s ** 2 / (l * bk) for s, l, bk in zip(sig, lam, b))
cost = c1 + c2 / 2
fmt("variance_a33_b1_05", variance)
fmt("drift_a33_b1_05", drift)
fmt("cost_a33_b1_05", cost)
# constrained running reward at z=1, x=0: drift*z + kappa*x - cost
fmt("h_c_reward_z1", drift * 1 - cost)

# optimizer maps: a*_k(z) = mu_k max(-z, 0), b*_k(gamma) = (-lambda_k g)^-1/2,
# b°_k(S) = S/(sigma_bar sqrt(lambda_k)); S*(g) = sigma_bar/sqrt(-g).
for g in ("-0.5", "-1", "-4"):
    gg = mpf(g)
    for k in range(2):
        fmt(f"b_star_{k}_at_{g}", (-lam[k] * gg) ** mpf("-0.5"))
    fmt(f"s_star_at_{g}", sigma_bar / sqrt(-gg))
    fmt(f"h_a_at_{g}", -sigma_bar * sqrt(-gg))
for k in range(2):
    fmt(f"b_circ_{k}_at_1.5", mpf("1.5") / (sigma_bar * sqrt(lam[k])))
fmt("h_c_at_1.5_z0", -sigma_bar ** 2 / (2 * mpf("1.5")))
fmt("gamma_star_at_0.75", -sigma_bar ** 2 / mpf("0.75") ** 2)

# ----------------------------------------------------------------------------
# quartic: T=1, x0=0, y0=0
# ----------------------------------------------------------------------------
print("[quartic] T=1 x0=0 y0=0")
s_fb = mpf(2) / 3
fmt("s_first_best", s_fb)
fmt("fb_rate", s_fb ** 2 - s_fb ** 3 - 1)               # H_c(S) - S^3 at S*
fmt("first_best_total", -(mpf(23) / 27))
fmt("restricted_total", mpf(-1))
for s in ("0", "0.25", "0.5", "0.75", "1"):
    ss = mpf(s)
    fmt(f"gap_at_{s}", ss - ss ** 2)                     # biconjugate - H_c
    fmt(f"h_c_at_{s}", ss ** 2 - 1)
for g in ("-4", "-2", "0", "1"):
    gg = mpf(g)
    fmt(f"h_a_at_{g}", max(gg / 2, mpf(-1)))
fmt("biconj_at_0.5", mpf("0.5") - 1)                     # at gamma* = -2
fmt("biconj_at_1", mpf(0))
