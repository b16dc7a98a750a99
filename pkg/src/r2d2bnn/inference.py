"""Training engines: variational Gibbs inference, plain SVI, SGLD, and HMC.

The variational loop alternates a reparameterized weight draw, an ELBO
gradient step on (mu, rho), and an exact Gibbs sweep over the shrinkage
latents.  Only the weight KL is differentiated; the shrinkage KL components
are constants for the optimizer and enter the objective (clamping a noisy
negative Monte-Carlo phi term at zero) and the per-epoch reports (unclamped).

SGLD and HMC operate on point-parameterized twins of the same architectures
and provide the sampling baselines and the small-scale oracle posterior used
for inference-error evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, backward
from .distributions import NormalParams, log_density
from .divergence import KlBreakdown, make_breakdown
from .layers import (
    BayesNet,
    HorseshoeState,
    PriorConfig,
    ShrinkageState,
    gibbs_update,
    init_layer,
)
from .rng import RngState

__all__ = [
    "TrainConfig",
    "TrainData",
    "ElboReport",
    "PosteriorSamples",
    "TrainingDiverged",
    "train_svgi",
    "train_svi",
    "train_sgld",
    "sgld_sample",
    "hmc_oracle",
    "hmc_sample",
    "leapfrog",
    "inference_error",
    "predict",
    "PointNet",
]


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite or a sampler runs away."""

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message + ("\n" + diagnostics if diagnostics else ""))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1024
    lr: float = 5e-4
    weight_decay: float = 0.0
    kl_anneal: float = 0.001
    early_stop_patience: int = 5
    mc_train_samples: int = 1
    mc_eval_samples: int = 100
    seed: int = 0
    gibbs_every: int = 1  # 0 disables Gibbs sweeps

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be > 0")
        if not (0.0 < self.kl_anneal <= 1.0):
            raise ValueError("kl_anneal must lie in (0, 1]")
        if self.mc_train_samples < 1 or self.mc_eval_samples < 1:
            raise ValueError("sample counts must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass
class TrainData:
    """Training/evaluation arrays in model space.

    ``task`` selects the likelihood: gaussian_nll with ``obs_var`` for
    regression, cross entropy for classification (integer labels).
    """

    x: np.ndarray
    y: np.ndarray
    task: str = "regression"
    obs_var: float = 1.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.task == "regression":
            self.y = np.asarray(self.y, dtype=float)
        elif self.task == "classification":
            self.y = np.asarray(self.y, dtype=np.int64)
        else:
            raise ValueError(f"unknown task {self.task!r}")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y row counts differ")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ElboReport:
    nll: float
    kl: KlBreakdown
    elbo: float
    epoch: int

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "nll": self.nll,
            "kl_xi": self.kl.kl_xi,
            "kl_omega": self.kl.kl_omega,
            "kl_psi": self.kl.kl_psi,
            "kl_phi": self.kl.kl_phi,
            "kl_w": self.kl.kl_w,
            "kl_total": self.kl.total,
            "elbo": self.elbo,
        }


@dataclass
class PosteriorSamples:
    """Stacked flat parameter vectors drawn from a posterior."""

    samples: np.ndarray  # (n_samples, n_params)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)


def _shrinkage_dump(net: BayesNet) -> str:
    lines = []
    for i, layer in enumerate(net.layers):
        st = layer.state
        if isinstance(st, ShrinkageState):
            lines.append(
                f"layer {i}: omega={st.omega:.3e} xi={st.xi:.3e} "
                f"psi[min,max]=[{st.psi.min():.3e},{st.psi.max():.3e}] "
                f"phi[min,max]=[{st.phi.min():.3e},{st.phi.max():.3e}]"
            )
        else:
            lines.append(f"layer {i}: state={type(st).__name__}")
    return "\n".join(lines)


def _batches(n: int, batch_size: int, gen: np.random.Generator):
    order = gen.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _nll_tensor(pred, yb, task: str, obs_var: float):
    if task == "regression":
        return ad.gaussian_nll_loss(pred, yb, obs_var)
    return ad.cross_entropy_loss(pred, yb)


def _train_vi(model: BayesNet, data: TrainData, config: TrainConfig, rng: RngState, gibbs: bool):
    reports: list[ElboReport] = []
    if config.epochs == 0:
        return model, reports
    params = model.parameters()
    opt_state = AdamState()
    shuffle_gen = rng.child("shuffle").generator
    best_loss = math.inf
    stale = 0
    step = 0
    gibbs_every = config.gibbs_every if gibbs else 0

    # burn the latents in on the initial means: the prior draw of the global
    # scale is heavy-tailed and can start orders of magnitude away from the
    # conditional scale, flooding the first epochs with weight noise
    if gibbs_every:
        for k in range(3):
            model.gibbs_sweep(None, rng.child(f"burnin{k}"))

    for epoch in range(config.epochs):
        epoch_nll = 0.0
        epoch_kl: list[KlBreakdown] = []
        n_batches = 0
        for idx in _batches(data.n, config.batch_size, shuffle_gen):
            xb, yb = data.x[idx], data.y[idx]
            step_rng = rng.child(f"step{step}")
            with ad.Tape():
                draws = model.sample_all(step_rng.child("draw"))
                pred = model.forward(xb, draws)
                nll = _nll_tensor(pred, yb, data.task, data.obs_var)
                if config.mc_train_samples > 1:
                    for s in range(1, config.mc_train_samples):
                        extra = model.sample_all(step_rng.child(f"draw{s}"))
                        nll = ad.add(nll, _nll_tensor(model.forward(xb, extra), yb, data.task, data.obs_var))
                    nll = ad.mul(nll, 1.0 / config.mc_train_samples)
                breakdown, kl_w_t = model.kl(step_rng.child("kl"), draws)
                # the likelihood term is a batch mean while the KL is summed
                # over all parameters once per dataset, hence the 1/n scaling
                objective = ad.add(nll, ad.mul(kl_w_t, config.kl_anneal / data.n))
                nll_value = float(nll.data)
                if not np.isfinite(nll_value) or not np.isfinite(breakdown.total):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} step {step}", _shrinkage_dump(model)
                    )
                for p in params:
                    p.zero_grad()
                backward(objective)
            grads = [p.grad for p in params]
            adam_step(params, grads, opt_state, config.lr, config.weight_decay)
            if gibbs_every and step % gibbs_every == 0:
                model.gibbs_sweep(draws, step_rng.child("gibbs"))
            epoch_nll += nll_value
            epoch_kl.append(breakdown)
            n_batches += 1
            step += 1

        # nll is reported at dataset scale so that
        # elbo = -(nll + anneal * kl_total) is the (annealed) evidence bound
        total_nll = epoch_nll / n_batches * data.n
        mean_kl = make_breakdown(
            kl_xi=sum(b.kl_xi for b in epoch_kl) / n_batches,
            kl_omega=sum(b.kl_omega for b in epoch_kl) / n_batches,
            kl_psi=sum(b.kl_psi for b in epoch_kl) / n_batches,
            kl_phi=sum(b.kl_phi for b in epoch_kl) / n_batches,
            kl_w=sum(b.kl_w for b in epoch_kl) / n_batches,
        )
        elbo = -(total_nll + config.kl_anneal * mean_kl.total)
        reports.append(ElboReport(nll=total_nll, kl=mean_kl, elbo=elbo, epoch=epoch))

        # early stopping monitors the supervision loss; the shrinkage KL
        # fluctuates across Gibbs sweeps and would trip the patience counter
        if total_nll < best_loss - 1e-12:
            best_loss = total_nll
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    return model, reports


def train_svgi(model: BayesNet, data: TrainData, config: TrainConfig, rng: RngState):
    """Variational Gibbs inference: gradient steps on (mu, rho) interleaved
    with exact Gibbs sweeps on the shrinkage latents."""
    return _train_vi(model, data, config, rng, gibbs=True)


def train_svi(model: BayesNet, data: TrainData, config: TrainConfig, rng: RngState):
    """Mean-field SVI baseline: same loop with the Gibbs sweeps disabled, so
    any shrinkage latents stay at their initialization draws."""
    return _train_vi(model, data, config, rng, gibbs=False)


# ---------------------------------------------------------------------------
# point-parameterized networks for SGLD / HMC


class PointNet:
    """Point-estimate twin of :class:`BayesNet` for samplers.

    Carries one weight tensor per layer plus the same prior machinery
    (including frozen or Gibbs-updated shrinkage latents) so that the log
    prior matches the Bayesian model's conditional prior exactly.
    """

    def __init__(self, arch, config: PriorConfig, rng: RngState, init_scale: float = 0.1):
        self.arch = list(arch)
        self.config = config
        self.layers = []
        gen = rng.child("point_init").generator
        for i, entry in enumerate(self.arch):
            if entry[0] not in ("linear", "conv"):
                continue
            shape = entry[1]
            padding = entry[2] if len(entry) > 2 else 0
            vw, state = init_layer(shape, config, rng.child(f"layer{i}"))
            w = Tensor(gen.normal(0.0, init_scale, size=shape), requires_grad=True)
            n_b = shape[0]
            b = Tensor(np.zeros(n_b), requires_grad=True)
            self.layers.append(
                {"kind": entry[0], "shape": tuple(shape), "padding": padding, "w": w, "b": b,
                 "vw": vw, "state": state}
            )

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend([layer["w"], layer["b"]])
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.parameters()])

    def set_flat(self, theta: np.ndarray) -> None:
        off = 0
        for p in self.parameters():
            p.data = np.array(theta[off : off + p.size], dtype=float).reshape(p.data.shape)
            off += p.size

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        li = 0
        for entry in self.arch:
            op = entry[0]
            if op in ("linear", "conv"):
                layer = self.layers[li]
                if op == "linear":
                    x = ad.linear_forward(x, layer["w"], layer["b"])
                else:
                    x = ad.conv2d_forward(x, layer["w"], layer["b"], padding=layer["padding"])
                li += 1
            elif op == "maxpool":
                x = ad.max_pool2d(x, entry[1])
            elif op == "flatten":
                x = ad.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))
            else:
                x = ad.activate(x, op)
        return x

    def _layer_prior_var(self, layer) -> np.ndarray:
        cfg = self.config
        p_l = layer["w"].size + layer["b"].size
        if cfg.family == "gaussian":
            return np.full(p_l, cfg.gauss_prior_sd**2)
        if cfg.family == "r2d2":
            fac = layer["state"].variance_factor()
            return np.maximum(fac * cfg.sigma_prior**2, 1e-10)
        if cfg.family == "horseshoe":
            fac = layer["state"].variance_factor()
            return np.maximum(fac * cfg.sigma_prior**2, 1e-10)
        raise ValueError(f"no point-model prior for family {cfg.family!r}")

    def log_prior(self) -> Tensor:
        """Differentiable log prior of the current parameters (conditional on
        any shrinkage latents)."""
        total = None
        for layer in self.layers:
            var = self._layer_prior_var(layer)
            n_w = layer["w"].size
            flat = ad.concat([ad.reshape(layer["w"], (n_w,)), layer["b"]])
            quad = ad.tsum(ad.mul(ad.square(flat), Tensor(-0.5 / var)))
            const = float(-0.5 * np.sum(np.log(2.0 * np.pi * var)))
            piece = ad.add(quad, const)
            total = piece if total is None else ad.add(total, piece)
        return total

    def gibbs_latents(self, rng: RngState) -> None:
        """Refresh shrinkage latents given the current point weights."""
        if self.config.family != "r2d2":
            return
        for i, layer in enumerate(self.layers):
            flat = np.concatenate([layer["w"].data.ravel(), layer["b"].data.ravel()])
            vw = layer["vw"]
            vw.rho.data[:] = self.config.rho0_mean
            vw.rho_bias.data[:] = self.config.rho0_mean
            layer["state"] = gibbs_update(vw, layer["state"], flat, rng.child(f"g{i}"), self.config)


def _potential_and_grad(net: PointNet, x, y, task, obs_var, n_scale: float):
    """U = n_scale * mean_nll - log_prior and its gradient as a flat vector."""
    params = net.parameters()
    with ad.Tape():
        pred = net.forward(x)
        nll = _nll_tensor(pred, y, task, obs_var)
        u = ad.sub(ad.mul(nll, n_scale), net.log_prior())
        for p in params:
            p.zero_grad()
        backward(u)
    grad = np.concatenate([
        (p.grad if p.grad is not None else np.zeros_like(p.data)).ravel() for p in params
    ])
    return float(u.data), grad


def sgld_sample(grad_log_post, theta0, n_steps, rng: RngState, step_a=1e-3, step_b=1.0,
                step_gamma=0.55, burn_in=None, thin=1, noise_scale=1.0, max_abs=1e6):
    """Generic SGLD chain: theta <- theta + (eps/2) grad_log_post + N(0, eps).

    Polynomially decaying eps_t = step_a * (step_b + t)^(-step_gamma).
    ``noise_scale=0`` reduces the update to plain gradient ascent.
    """
    theta = np.array(theta0, dtype=float)
    gen = rng.generator
    if burn_in is None:
        burn_in = n_steps // 2
    kept = []
    for t in range(n_steps):
        eps = step_a * (step_b + t) ** (-step_gamma)
        g = grad_log_post(theta)
        noise = gen.standard_normal(theta.shape) * math.sqrt(eps) * noise_scale
        theta = theta + 0.5 * eps * g + noise
        if np.max(np.abs(theta)) > max_abs:
            raise TrainingDiverged(f"SGLD diverged at step {t}: |theta|_inf > {max_abs:g}")
        if t >= burn_in and (t - burn_in) % thin == 0:
            kept.append(theta.copy())
    return PosteriorSamples(np.array(kept))


def train_sgld(model: PointNet, data: TrainData, config: TrainConfig, rng: RngState):
    """SGLD over a point-parameterized network.

    Runs epochs x batches steps with minibatch gradient estimates of the full
    log posterior, refreshing shrinkage latents by Gibbs when the prior has
    them, and retains up to mc_eval_samples thinned post-burn-in samples.
    """
    shuffle_gen = rng.child("shuffle").generator
    n_steps = config.epochs * max(1, math.ceil(data.n / config.batch_size))
    burn_in = n_steps // 2
    keep_budget = max(1, n_steps - burn_in)
    thin = max(1, keep_budget // config.mc_eval_samples)
    gen = rng.child("noise").generator
    params = model.parameters()
    kept = []
    t = 0
    for _epoch in range(config.epochs):
        for idx in _batches(data.n, config.batch_size, shuffle_gen):
            xb, yb = data.x[idx], data.y[idx]
            eps = config.lr * (1.0 + t) ** (-0.55)
            _, grad_u = _potential_and_grad(model, xb, yb, data.task, data.obs_var, float(data.n))
            theta = model.get_flat()
            theta = theta - 0.5 * eps * grad_u + gen.standard_normal(theta.shape) * math.sqrt(eps)
            if np.max(np.abs(theta)) > 1e6:
                raise TrainingDiverged(f"SGLD diverged at step {t}")
            model.set_flat(theta)
            if self_has_latents(model) and config.gibbs_every and t % config.gibbs_every == 0:
                model.gibbs_latents(rng.child(f"lat{t}"))
            if t >= burn_in and (t - burn_in) % thin == 0 and len(kept) < config.mc_eval_samples:
                kept.append(theta.copy())
            t += 1
    if not kept:
        kept.append(model.get_flat())
    return model, PosteriorSamples(np.array(kept))


def self_has_latents(model: PointNet) -> bool:
    return model.config.family == "r2d2"


# ---------------------------------------------------------------------------
# HMC


def leapfrog(theta, momentum, grad_u, step_size, n_steps, grad_fn):
    """Standard leapfrog integration of Hamiltonian dynamics.

    grad_fn(theta) -> gradient of the potential U; returns the new state and
    the gradient at the endpoint.
    """
    theta = theta.copy()
    momentum = momentum - 0.5 * step_size * grad_u
    for i in range(n_steps):
        theta = theta + step_size * momentum
        grad_u = grad_fn(theta)
        if i < n_steps - 1:
            momentum = momentum - step_size * grad_u
    momentum = momentum - 0.5 * step_size * grad_u
    return theta, momentum, grad_u


def hmc_sample(
    potential_fn,
    theta0,
    rng: RngState,
    n_samples: int = 100,
    warmup: int = 100,
    n_leapfrog: int = 32,
    step_size: float = 0.1,
    target_accept: tuple[float, float] = (0.6, 0.9),
    metropolis: bool = True,
    between_samples=None,
):
    """Generic HMC with leapfrog integration and warm-up step-size tuning.

    potential_fn(theta) -> (U, grad U).  Step size is multiplicatively
    adapted during warm-up toward the target acceptance band.  Returns
    (samples, acceptance_rate).  ``between_samples`` is an optional callback
    run after每 accepted draw, used for Gibbs refreshes of latents.
    """
    theta = np.array(theta0, dtype=float)
    gen = rng.generator
    u, grad_u = potential_fn(theta)
    kept = []
    accepts = 0
    proposals = 0
    for it in range(warmup + n_samples):
        momentum = gen.standard_normal(theta.shape)
        h0 = u + 0.5 * float(momentum @ momentum)
        new_theta, new_momentum, new_grad = leapfrog(
            theta, momentum, grad_u, step_size, n_leapfrog, lambda th: potential_fn(th)[1]
        )
        new_u = potential_fn(new_theta)[0]
        h1 = new_u + 0.5 * float(new_momentum @ new_momentum)
        log_ratio = h0 - h1
        accept = (not metropolis) or (math.log(gen.random()) < min(0.0, log_ratio))
        if accept and np.all(np.isfinite(new_theta)):
            theta, u, grad_u = new_theta, new_u, new_grad
            accepts += 1
        proposals += 1
        if it < warmup:
            rate = accepts / proposals
            if rate < target_accept[0]:
                step_size *= 0.9
            elif rate > target_accept[1]:
                step_size *= 1.05
        else:
            kept.append(theta.copy())
            if between_samples is not None:
                between_samples(theta)
                u, grad_u = potential_fn(theta)
    post_rate = accepts / proposals
    return PosteriorSamples(np.array(kept)), post_rate


def hmc_oracle(arch, prior_config: PriorConfig, data: TrainData, config: TrainConfig, rng: RngState):
    """Oracle posterior for small networks by HMC (within Gibbs for R2D2).

    The full-data potential is the exact negative log posterior with the
    prior evaluated through the distributions module.  Aborts if acceptance
    falls below 10% after warm-up.
    """
    net = PointNet(arch, prior_config, rng.child("net"), init_scale=0.01)
    if net.n_params > 2000:
        raise ValueError(f"hmc_oracle limited to 2000 parameters, got {net.n_params}")

    def potential(theta):
        net.set_flat(theta)
        return _potential_and_grad(net, data.x, data.y, data.task, data.obs_var, float(data.n))

    def refresh(theta):
        net.set_flat(theta)
        net.gibbs_latents(rng.child("gibbs"))

    between = refresh if prior_config.family == "r2d2" else None
    samples, rate = hmc_sample(
        potential,
        net.get_flat(),
        rng.child("chain"),
        n_samples=config.mc_eval_samples,
        warmup=max(50, config.mc_eval_samples // 2),
        between_samples=between,
    )
    if rate < 0.10:
        raise TrainingDiverged(f"HMC acceptance {rate:.3f} below 10%", "")
    return samples


def inference_error(learned, oracle) -> float:
    """L2 distance between posterior means of two sample sets (or mean vectors)."""
    a = learned.mean if isinstance(learned, PosteriorSamples) else np.asarray(learned, dtype=float)
    b = oracle.mean if isinstance(oracle, PosteriorSamples) else np.asarray(oracle, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"parameter dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def predict(model: BayesNet, inputs, mc_eval_samples: int, rng: RngState, apply_softmax: bool = False):
    """Monte-Carlo predictive mean, variance and per-draw outputs.

    Draws mc_eval_samples weight samples, runs the forward pass for each, and
    averages.  With ``apply_softmax`` the per-draw outputs are softmax
    probabilities (classification predictive).
    """
    outs = []
    x = np.asarray(inputs, dtype=float)
    for s in range(mc_eval_samples):
        draws = model.sample_all(rng.child(f"pred{s}"))
        out = model.forward(x, draws)
        if apply_softmax:
            out = ad.softmax(out)
        outs.append(out.data)
    stack = np.stack(outs, axis=0)
    return stack.mean(axis=0), stack.var(axis=0), stack
