"""Bayesian layers binding variational weight parameters to a prior family.

A layer owns two kinds of state.  The variational parameters (mu, rho) are
autodiff leaves updated by gradient steps; sigma = softplus(rho) is the
per-weight posterior scale.  The shrinkage latents, when the prior has any,
are plain numpy arrays updated only by exact Gibbs sweeps and treated as
constants during backpropagation.

Prior families:
  * ``r2d2``       weight variance psi * phi * omega * sigma^2 / 2 with the
                   exponential / Dirichlet / Gamma-Gamma hierarchy on the
                   shrinkage factors, Gibbs-updated each step;
  * ``gaussian``   fixed N(0, gauss_prior_sd^2) prior, plain mean-field;
  * ``horseshoe``  Gaussian scale mixture with half-Cauchy global and local
                   scales drawn at initialization (non-centered), mean-field
                   KL on the Gaussian part only;
  * ``spike_slab`` two-component Gaussian mixture prior; the weight KL uses a
                   single-sample pathwise estimate of the cross entropy since
                   no closed form exists.

Layer parameter vectors are flattened as concat(weights, biases); the local
shrinkage arrays (psi, phi) run over that whole vector, so biases are shrunk
like any other parameter and p_l counts them too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .distributions import (
    DirichletParams,
    GammaParams,
    GiGParams,
    InvGaussianParams,
    sample_dirichlet,
    sample_gamma,
    sample_gig,
    sample_inv_gaussian,
)
from .divergence import (
    KlBreakdown,
    combine_breakdowns,
    kl_gamma_gamma,
    kl_gig_gamma,
    kl_phi_mc,
    kl_psi,
    make_breakdown,
)
from .rng import RngState
from .special import softplus

__all__ = [
    "PriorConfig",
    "VariationalWeights",
    "ShrinkageState",
    "HorseshoeState",
    "CLAMP_LO",
    "CLAMP_HI",
    "init_layer",
    "sample_weights",
    "gibbs_update",
    "layer_kl",
    "BayesLayer",
    "BayesNet",
    "mlp_arch",
    "lenet_arch",
]

CLAMP_LO = 1e-12
CLAMP_HI = 1e12

FAMILIES = ("r2d2", "gaussian", "horseshoe", "spike_slab")


def _clamp(x):
    return np.clip(x, CLAMP_LO, CLAMP_HI)


@dataclass(frozen=True)
class PriorConfig:
    family: str = "r2d2"
    a_pi: float = 0.6
    b: float = 0.5
    rho0_mean: float = -3.0
    rho0_sd: float = 0.1
    gauss_prior_sd: float = 1.0
    hs_global: float = 1.0
    hs_local: float = 1.0
    ss_sigma0: float = 0.01
    ss_sigma1: float = 1.0
    ss_mix: float = 0.5
    # posterior-mean init scale; exactly zero leaves ReLU units symmetric
    # (dead at the mean), which stalls desk-scale training
    mu_init_sd: float = 0.1
    phi_kl_samples: int = 32
    # order parameter of the per-coordinate giG draws behind the phi update:
    # "layer" uses a_l - p_l/2, "coordinate" uses a_pi - 1/2
    phi_update_order: str = "layer"
    # vector the Gibbs conditionals (and shrinkage KLs) condition on:
    # "mean" uses the posterior means, "draw" the current weight sample.
    # Conditioning on the draw feeds the draw's own noise back into the
    # global-scale update, whose loop gain sits at ~1 and drifts unstable.
    gibbs_conditioning: str = "mean"
    # weight-KL prior for shrinkage families:
    #   "matched"          mean term mu^2/(2 gauss_prior_sd^2) only; the
    #                      variance sides are taken as matched (the same-sigma
    #                      conditional-prior structure), so the KL exerts no
    #                      scale pressure.  The hierarchy's own divergence
    #                      lives in the xi/omega/psi/phi components.
    #   "standard"         full KL of q = N(mu, fac sigma^2) against
    #                      N(0, gauss_prior_sd^2); the log-scale term inflates
    #                      sigma through the Gibbs feedback
    #   "conditional"      against N(0, fac * prior_scale^2), sharing the
    #                      shrinkage factor
    #   "conditional-rho0" same with prior_scale = softplus(rho0_mean); the
    #                      annealed mean-pull then exceeds the likelihood
    #                      gradient by ~100x and pins every mean at zero
    kl_w_prior: str = "matched"
    prior_scale: float = 1.0
    # scale entering the Gibbs conditionals (and the conditional KLs):
    # "prior" anchors them at prior_scale; "variational" uses the live
    # softplus(rho), which makes the hierarchy scale-free in sigma so the
    # draw noise tracks the weight magnitudes no matter what the optimizer
    # does to rho
    gibbs_sigma: str = "prior"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown prior family {self.family!r}")
        if not (0.0 < self.a_pi <= 1.0):
            raise ValueError("a_pi must lie in (0, 1]")
        if self.b <= 0.0:
            raise ValueError("b must be > 0")
        if self.phi_update_order not in ("layer", "coordinate"):
            raise ValueError("phi_update_order must be 'layer' or 'coordinate'")
        if self.gibbs_conditioning not in ("mean", "draw"):
            raise ValueError("gibbs_conditioning must be 'mean' or 'draw'")
        if self.kl_w_prior not in ("matched", "standard", "conditional", "conditional-rho0"):
            raise ValueError(
                "kl_w_prior must be 'matched', 'standard', 'conditional' or 'conditional-rho0'"
            )
        if self.gibbs_sigma not in ("prior", "variational"):
            raise ValueError("gibbs_sigma must be 'prior' or 'variational'")
        if self.phi_kl_samples < 1:
            raise ValueError("phi_kl_samples must be >= 1")

    @property
    def sigma_prior(self) -> float:
        return float(softplus(self.rho0_mean))


@dataclass
class VariationalWeights:
    """Per-weight posterior means and pre-softplus scales, autodiff leaves."""

    mu: Tensor
    rho: Tensor
    mu_bias: Tensor
    rho_bias: Tensor

    def parameters(self) -> list[Tensor]:
        return [self.mu, self.rho, self.mu_bias, self.rho_bias]

    @property
    def count(self) -> int:
        return self.mu.size + self.mu_bias.size

    def flat_mu(self) -> np.ndarray:
        return np.concatenate([self.mu.data.ravel(), self.mu_bias.data.ravel()])

    def flat_sigma(self) -> np.ndarray:
        return np.asarray(
            softplus(np.concatenate([self.rho.data.ravel(), self.rho_bias.data.ravel()]))
        )


@dataclass
class ShrinkageState:
    """R2D2 latent variables for one layer, over the flat parameter vector."""

    psi: np.ndarray
    phi: np.ndarray
    omega: float
    xi: float
    a_l: float
    b_l: float

    def validate(self) -> None:
        p = self.psi.size
        if self.phi.size != p:
            raise ValueError("psi and phi must have equal length")
        if abs(self.phi.sum() - 1.0) > 1e-9:
            raise ValueError("phi must sum to 1")
        for name, arr in (("psi", self.psi), ("phi", self.phi)):
            if np.any(arr < CLAMP_LO * (1.0 - 1e-9)) or np.any(arr > CLAMP_HI):
                raise ValueError(f"{name} outside the clamp band")
        if not (CLAMP_LO <= self.omega <= CLAMP_HI and CLAMP_LO <= self.xi <= CLAMP_HI):
            raise ValueError("omega/xi outside the clamp band")

    def variance_factor(self) -> np.ndarray:
        return self.psi * self.phi * self.omega / 2.0


@dataclass
class HorseshoeState:
    """Half-Cauchy scale draws for the horseshoe baseline; fixed after init."""

    tau: float
    local: np.ndarray

    def variance_factor(self) -> np.ndarray:
        return (self.tau * self.local) ** 2


def _param_count(shape) -> tuple[int, int]:
    """(weight count, bias count) for a linear or conv shape tuple."""
    if len(shape) == 2:
        d_out, d_in = shape
        return d_out * d_in, d_out
    if len(shape) == 4:
        c_out = shape[0]
        return int(np.prod(shape)), c_out
    raise ValueError(f"unsupported layer shape {shape}")


def _half_cauchy(scale: float, rng: RngState, size=None):
    u = rng.generator.random(size)
    return scale * np.tan(np.pi * u / 2.0)


def init_layer(shape, config: PriorConfig, rng: RngState):
    """Initialize variational weights and, for shrinkage families, the latents.

    mu starts at zero and rho ~ N(rho0_mean, rho0_sd^2).  The R2D2 hierarchy
    is drawn from its prior: psi ~ Exp(1/2), phi ~ Dir(a_pi, ..., a_pi),
    xi ~ Ga(b_l, 1) and omega | xi ~ Ga(a_l, xi) with a_l = p_l * a_pi.
    """
    n_w, n_b = _param_count(shape)
    p_l = n_w + n_b
    gen = rng.child("init").generator
    w_shape = tuple(shape)
    if config.mu_init_sd > 0.0:
        mu0 = gen.normal(0.0, config.mu_init_sd, size=w_shape)
    else:
        mu0 = np.zeros(w_shape)
    vw = VariationalWeights(
        mu=Tensor(mu0, requires_grad=True),
        rho=Tensor(gen.normal(config.rho0_mean, config.rho0_sd, size=w_shape), requires_grad=True),
        mu_bias=Tensor(np.zeros(n_b), requires_grad=True),
        rho_bias=Tensor(gen.normal(config.rho0_mean, config.rho0_sd, size=n_b), requires_grad=True),
    )
    if config.family == "r2d2":
        a_l = p_l * config.a_pi
        b_l = config.b
        hrng = rng.child("hierarchy")
        psi = _clamp(2.0 * hrng.child("psi").generator.standard_exponential(p_l))
        if p_l == 1:
            phi = np.ones(1)
        else:
            phi = sample_dirichlet(DirichletParams(np.full(p_l, config.a_pi)), hrng.child("phi"))
            phi = np.clip(phi, CLAMP_LO * 1.01, None)
            phi = phi / phi.sum()
        xi = float(_clamp(sample_gamma(GammaParams(b_l, 1.0), hrng.child("xi"))))
        omega = float(_clamp(sample_gamma(GammaParams(a_l, xi), hrng.child("omega"))))
        return vw, ShrinkageState(psi=psi, phi=phi, omega=omega, xi=xi, a_l=a_l, b_l=b_l)
    if config.family == "horseshoe":
        hrng = rng.child("hierarchy")
        tau = float(_clamp(abs(_half_cauchy(config.hs_global, hrng.child("tau")))))
        local = _clamp(np.abs(_half_cauchy(config.hs_local, hrng.child("local"), size=p_l)))
        return vw, HorseshoeState(tau=tau, local=local)
    return vw, None


def _variance_factor(state, config: PriorConfig, p_l: int) -> np.ndarray:
    if config.family == "r2d2":
        return state.variance_factor()
    if config.family == "horseshoe":
        return state.variance_factor()
    return np.ones(p_l)


def sample_weights(vw: VariationalWeights, state, config: PriorConfig, rng: RngState):
    """Reparameterized weight draw w = mu + sqrt(variance) * eps.

    The variance is sigma^2 times the family's shrinkage factor (psi phi
    omega / 2 for R2D2, (tau lambda)^2 for horseshoe, 1 otherwise).  Gradients
    flow to mu and rho only; shrinkage factors enter as constants.  Returns
    (w, b) tensors shaped like the layer plus the flat numpy draw.
    """
    n_w = vw.mu.size
    p_l = vw.count
    eps = rng.generator.standard_normal(p_l)
    fac = _variance_factor(state, config, p_l)
    scaled_eps = eps * np.sqrt(fac)
    sd_w = ad.softplus_t(vw.rho)
    sd_b = ad.softplus_t(vw.rho_bias)
    w = ad.add(vw.mu, ad.mul(sd_w, Tensor(scaled_eps[:n_w].reshape(vw.mu.shape))))
    b = ad.add(vw.mu_bias, ad.mul(sd_b, Tensor(scaled_eps[n_w:])))
    flat = np.concatenate([w.data.ravel(), b.data.ravel()])
    return w, b, flat


def _conditional_sigma(vw: VariationalWeights, config: PriorConfig | None) -> np.ndarray:
    if config is None or config.gibbs_sigma == "prior":
        scale = config.prior_scale if config is not None else 1.0
        return np.full(vw.count, scale)
    return vw.flat_sigma()


def gibbs_update(
    vw: VariationalWeights,
    ss: ShrinkageState,
    w_sample: np.ndarray,
    rng: RngState,
    config: PriorConfig | None = None,
) -> ShrinkageState:
    """One full conditional sweep psi -> omega -> xi -> phi.

    ``w_sample`` is the current flat weight draw.  Every sampled scalar is
    clamped to [1e-12, 1e12] before it can enter a variance product, and a
    fresh state is returned; the input state is left untouched.
    """
    p_l = ss.psi.size
    if w_sample.shape != (p_l,):
        raise ValueError("w_sample must be the flat layer parameter vector")
    sigma = _conditional_sigma(vw, config)
    sigma2 = sigma * sigma
    aw = np.maximum(np.abs(w_sample), 1e-12)
    w2 = w_sample * w_sample

    # psi | . : reciprocal inverse-Gaussian
    mu_ig = np.sqrt(sigma2 * ss.phi * ss.omega / 2.0) / aw
    mu_ig = np.clip(mu_ig, 1e-12, 1e12)
    y = sample_inv_gaussian(InvGaussianParams(mu_ig, 1.0), rng.child("psi"), size=p_l)
    psi = _clamp(1.0 / y)

    # omega | . : giG over the layer
    lam0 = ss.a_l - p_l / 2.0
    chi_omega = float(np.sum(2.0 * w2 / (sigma2 * ss.phi * psi)))
    chi_omega = min(max(chi_omega, 1e-290), 1e290)
    omega = float(_clamp(sample_gig(GiGParams(chi_omega, 2.0 * ss.xi, lam0), rng.child("omega"))))

    # xi | omega
    xi = float(_clamp(sample_gamma(GammaParams(ss.a_l + ss.b_l, 1.0 + omega), rng.child("xi"))))

    # phi | . via normalized per-coordinate giG draws
    if p_l == 1:
        phi = np.ones(1)
    else:
        if config is not None and config.phi_update_order == "coordinate":
            lam_t = (ss.a_l / p_l) - 0.5
        else:
            lam_t = lam0
        chi_t = np.clip(2.0 * w2 / (sigma2 * psi), 1e-290, 1e290)
        t = _clamp(sample_gig(GiGParams(chi_t, 2.0 * xi, lam_t), rng.child("phi"), size=p_l))
        phi = t / t.sum()
        phi = np.clip(phi, CLAMP_LO * 1.01, None)
        phi = phi / phi.sum()

    return ShrinkageState(psi=psi, phi=phi, omega=omega, xi=xi, a_l=ss.a_l, b_l=ss.b_l)


def _spike_slab_log_prior(w_flat_tensor: Tensor, config: PriorConfig) -> Tensor:
    lp1 = ad.add(
        ad.mul(ad.square(w_flat_tensor), -0.5 / config.ss_sigma1**2),
        math.log(max(config.ss_mix, 1e-300)) - 0.5 * math.log(2.0 * math.pi) - math.log(config.ss_sigma1),
    )
    lp0 = ad.add(
        ad.mul(ad.square(w_flat_tensor), -0.5 / config.ss_sigma0**2),
        math.log(max(1.0 - config.ss_mix, 1e-300))
        - 0.5 * math.log(2.0 * math.pi)
        - math.log(config.ss_sigma0),
    )
    return ad.tsum(ad.logaddexp(lp1, lp0))


def _gaussian_kl_tensor(vw: VariationalWeights, factor: np.ndarray, prior_sd: float, shared_factor: bool):
    """Differentiable mean-field Gaussian weight KL, summed over the layer.

    q = N(mu, factor * sigma_q^2).  With ``shared_factor`` the prior is the
    conditional N(0, factor * prior_sd^2), so the factor cancels everywhere
    except under the mu^2 term; otherwise the prior is the plain
    N(0, prior_sd^2) and the factor stays inside the variance ratio.
    """
    n_w = vw.mu.size
    sp2 = prior_sd * prior_sd
    out = None
    for mu_t, rho_t, fac in (
        (vw.mu, vw.rho, factor[:n_w].reshape(vw.mu.shape)),
        (vw.mu_bias, vw.rho_bias, factor[n_w:]),
    ):
        sq = ad.softplus_t(rho_t)
        if shared_factor:
            term = ad.add(
                ad.sub(ad.mul(ad.log(sq), -1.0), -math.log(prior_sd)),
                ad.add(
                    ad.mul(ad.square(sq), 1.0 / (2.0 * sp2)),
                    ad.mul(ad.square(mu_t), Tensor(1.0 / (fac * 2.0 * sp2))),
                ),
            )
        else:
            log_q_sd = ad.add(ad.log(sq), Tensor(0.5 * np.log(fac)))
            term = ad.add(
                ad.sub(ad.mul(log_q_sd, -1.0), -math.log(prior_sd)),
                ad.mul(
                    ad.add(ad.mul(ad.square(sq), Tensor(fac)), ad.square(mu_t)),
                    1.0 / (2.0 * sp2),
                ),
            )
        piece = ad.add(ad.tsum(term), -0.5 * mu_t.size)
        out = piece if out is None else ad.add(out, piece)
    return out


def _matched_kl_w(vw: VariationalWeights, prior_sd: float):
    quad = ad.add(ad.tsum(ad.square(vw.mu)), ad.tsum(ad.square(vw.mu_bias)))
    return ad.mul(quad, 1.0 / (2.0 * prior_sd * prior_sd))


def _shrinkage_kl_w(vw: VariationalWeights, fac: np.ndarray, config: PriorConfig):
    if config.kl_w_prior == "matched":
        return _matched_kl_w(vw, config.gauss_prior_sd)
    if config.kl_w_prior == "standard":
        return _gaussian_kl_tensor(vw, fac, config.gauss_prior_sd, shared_factor=False)
    if config.kl_w_prior == "conditional":
        return _gaussian_kl_tensor(vw, fac, config.prior_scale, shared_factor=True)
    return _gaussian_kl_tensor(vw, fac, config.sigma_prior, shared_factor=True)


def layer_kl(
    vw: VariationalWeights,
    state,
    config: PriorConfig,
    rng: RngState,
    w_sample: np.ndarray | None = None,
):
    """Assemble the KL breakdown for one layer.

    Returns (KlBreakdown, kl_w_tensor).  The tensor term is the only one the
    optimizer differentiates; the shrinkage components are scalars computed
    from the latents' most recent Gibbs conditionals at the current weight
    draw (falling back to the posterior means when no draw is supplied).
    """
    p_l = vw.count
    if w_sample is None:
        w_sample = vw.flat_mu()

    if config.family == "spike_slab":
        n_w = vw.mu.size
        sq_w = ad.softplus_t(vw.rho)
        sq_b = ad.softplus_t(vw.rho_bias)
        neg_entropy = ad.add(
            ad.sub(ad.mul(ad.tsum(ad.log(sq_w)), -1.0), ad.tsum(ad.log(sq_b))),
            -0.5 * p_l * (1.0 + math.log(2.0 * math.pi)),
        )
        # pathwise single-sample cross entropy through the current draw
        eps_w = (w_sample[:n_w].reshape(vw.mu.shape) - vw.mu.data) / np.asarray(softplus(vw.rho.data))
        eps_b = (w_sample[n_w:] - vw.mu_bias.data) / np.asarray(softplus(vw.rho_bias.data))
        wt = ad.add(vw.mu, ad.mul(sq_w, Tensor(eps_w)))
        bt = ad.add(vw.mu_bias, ad.mul(sq_b, Tensor(eps_b)))
        cross = _spike_slab_log_prior(ad.concat([ad.reshape(wt, (n_w,)), bt]), config)
        kl_w_t = ad.sub(neg_entropy, cross)
        breakdown = make_breakdown(kl_w=float(kl_w_t.data))
        return breakdown, kl_w_t

    if config.family == "gaussian":
        kl_w_t = _gaussian_kl_tensor(vw, np.ones(p_l), config.gauss_prior_sd, shared_factor=True)
        return make_breakdown(kl_w=float(kl_w_t.data)), kl_w_t

    if config.family == "horseshoe":
        fac = np.maximum(state.variance_factor(), 1e-290)
        kl_w_t = _shrinkage_kl_w(vw, fac, config)
        return make_breakdown(kl_w=float(kl_w_t.data)), kl_w_t

    # r2d2
    ss: ShrinkageState = state
    sigma = _conditional_sigma(vw, config)
    sigma2 = sigma * sigma
    aw = np.maximum(np.abs(w_sample), 1e-12)
    w2 = w_sample * w_sample

    kl_xi_v = kl_gamma_gamma(
        GammaParams(ss.a_l + ss.b_l, 1.0 + ss.omega), GammaParams(ss.b_l, 1.0)
    )
    lam0 = ss.a_l - p_l / 2.0
    chi_omega = float(np.clip(np.sum(2.0 * w2 / (sigma2 * ss.phi * ss.psi)), 1e-290, 1e290))
    kl_omega_v = kl_gig_gamma(
        GiGParams(chi_omega, 2.0 * ss.xi, lam0), GammaParams(ss.a_l, ss.xi)
    )
    mu_ig = np.clip(np.sqrt(sigma2 * ss.phi * ss.omega / 2.0) / aw, 1e-12, 1e12)
    kl_psi_v = float(np.sum(kl_psi(mu_ig, 0.5)))

    if p_l == 1:
        kl_phi_v = 0.0
    else:
        if config.phi_update_order == "coordinate":
            lam_t = (ss.a_l / p_l) - 0.5
        else:
            lam_t = lam0
        chi_t = np.clip(2.0 * w2 / (sigma2 * ss.psi), 1e-290, 1e290)
        t = sample_gig(
            GiGParams(chi_t[None, :], 2.0 * ss.xi, lam_t),
            rng.child("phi_kl"),
            size=(config.phi_kl_samples, p_l),
        )
        t = _clamp(t)
        phi_draws = t / t.sum(axis=1, keepdims=True)
        phi_draws = np.clip(phi_draws, CLAMP_LO, 1.0)
        phi_draws = phi_draws / phi_draws.sum(axis=1, keepdims=True)
        kl_phi_v = kl_phi_mc(phi_draws, DirichletParams(np.full(p_l, config.a_pi)))

    fac = np.maximum(ss.variance_factor(), 1e-290)
    kl_w_t = _shrinkage_kl_w(vw, fac, config)
    breakdown = make_breakdown(
        kl_xi=kl_xi_v,
        kl_omega=kl_omega_v,
        kl_psi=kl_psi_v,
        kl_phi=kl_phi_v,
        kl_w=float(kl_w_t.data),
    )
    return breakdown, kl_w_t


# ---------------------------------------------------------------------------
# layer and network containers


class BayesLayer:
    """One linear or conv layer with variational weights and prior state."""

    def __init__(self, kind: str, shape, config: PriorConfig, rng: RngState, padding: int = 0):
        if kind not in ("linear", "conv"):
            raise ValueError(f"unknown layer kind {kind!r}")
        self.kind = kind
        self.shape = tuple(shape)
        self.padding = padding
        self.config = config
        self.vw, self.state = init_layer(self.shape, config, rng)

    @property
    def count(self) -> int:
        return self.vw.count

    def parameters(self) -> list[Tensor]:
        return self.vw.parameters()

    def sample(self, rng: RngState):
        return sample_weights(self.vw, self.state, self.config, rng)

    def forward(self, x, w, b):
        if self.kind == "linear":
            return ad.linear_forward(x, w, b)
        return ad.conv2d_forward(x, w, b, padding=self.padding)

    def forward_mean(self, x):
        w = Tensor(self.vw.mu.data)
        b = Tensor(self.vw.mu_bias.data)
        return self.forward(x, w, b)

    def gibbs(self, w_sample: np.ndarray, rng: RngState) -> None:
        if isinstance(self.state, ShrinkageState):
            self.state = gibbs_update(self.vw, self.state, w_sample, rng, self.config)

    def kl(self, rng: RngState, w_sample: np.ndarray | None = None):
        return layer_kl(self.vw, self.state, self.config, rng, w_sample)


def mlp_arch(input_dim: int, hidden_layers: int, width: int, output_dim: int = 1, activation: str = "relu"):
    """Architecture spec for an MLP with the given number of hidden layers.

    Zero hidden layers is a plain (Bayesian) linear regression.
    """
    arch = []
    d = input_dim
    for _ in range(hidden_layers):
        arch.append(("linear", (width, d)))
        arch.append((activation,))
        d = width
    arch.append(("linear", (output_dim, d)))
    return arch


def lenet_arch(in_channels: int = 1, n_classes: int = 10, image_hw: int = 28):
    """LeNet-scale CNN spec for the OOD demonstration."""
    hw = image_hw - 4
    hw //= 2
    hw -= 4
    hw //= 2
    flat = 16 * hw * hw
    return [
        ("conv", (6, in_channels, 5, 5)),
        ("relu",),
        ("maxpool", 2),
        ("conv", (16, 6, 5, 5)),
        ("relu",),
        ("maxpool", 2),
        ("flatten",),
        ("linear", (120, flat)),
        ("relu",),
        ("linear", (84, 120)),
        ("relu",),
        ("linear", (n_classes, 84)),
    ]


class BayesNet:
    """Sequential Bayesian network over an architecture spec.

    The spec is a list of entries: ("linear", shape), ("conv", shape) or
    ("conv", shape, padding), ("relu"|"tanh"|"sigmoid"|"softmax"|"log_softmax",),
    ("maxpool", size), ("flatten",).
    """

    def __init__(self, arch, config: PriorConfig, rng: RngState):
        self.arch = list(arch)
        self.config = config
        self.layers: list[BayesLayer] = []
        for i, entry in enumerate(self.arch):
            if entry[0] in ("linear", "conv"):
                padding = entry[2] if len(entry) > 2 else 0
                self.layers.append(
                    BayesLayer(entry[0], entry[1], config, rng.child(f"layer{i}"), padding)
                )

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    @property
    def param_count(self) -> int:
        return sum(layer.count for layer in self.layers)

    def sample_all(self, rng: RngState):
        """Draw reparameterized weights for every Bayesian layer."""
        draws = []
        for i, layer in enumerate(self.layers):
            draws.append(layer.sample(rng.child(f"w{i}")))
        return draws

    def forward(self, x, draws=None):
        """Forward pass; with draws=None the posterior means are used."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        li = 0
        for entry in self.arch:
            op = entry[0]
            if op in ("linear", "conv"):
                if draws is None:
                    x = self.layers[li].forward_mean(x)
                else:
                    w, b, _ = draws[li]
                    x = self.layers[li].forward(x, w, b)
                li += 1
            elif op == "maxpool":
                x = ad.max_pool2d(x, entry[1])
            elif op == "flatten":
                x = ad.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))
            else:
                x = ad.activate(x, op)
        return x

    def _conditioning_vector(self, layer: BayesLayer, draws, i: int):
        if draws is None:
            return None
        if self.config.family == "spike_slab" or self.config.gibbs_conditioning == "draw":
            return draws[i][2]
        return layer.vw.flat_mu()

    def gibbs_sweep(self, draws, rng: RngState) -> None:
        for i, layer in enumerate(self.layers):
            vec = self._conditioning_vector(layer, draws, i)
            if vec is None:
                vec = layer.vw.flat_mu()
            layer.gibbs(vec, rng.child(f"gibbs{i}"))

    def kl(self, rng: RngState, draws=None):
        """Total KL breakdown plus the differentiable weight-KL tensor."""
        parts = []
        kl_w_t = None
        for i, layer in enumerate(self.layers):
            w_flat = self._conditioning_vector(layer, draws, i)
            breakdown, t = layer.kl(rng.child(f"kl{i}"), w_flat)
            parts.append(breakdown)
            kl_w_t = t if kl_w_t is None else ad.add(kl_w_t, t)
        return combine_breakdowns(parts), kl_w_t
