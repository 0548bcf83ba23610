"""Denoising-diffusion model for day-shaped time-series windows.

Forward corruption and reverse sampling follow the Gaussian diffusion
construction: x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps, with the reverse
update built from the exact posterior q(x_{t-1} | x_t, x0).  Training
minimizes the weighted MSE w_t ||x0 - x0_hat||^2 (optionally with a
frequency-domain term) by plain SGD with gradient accumulation and a
reduce-on-plateau learning-rate schedule.  The denoiser is a compact
pointwise network: each position sees its own value plus sinusoidal
positional and diffusion-step embeddings, so the whole model stays a few
thousand parameters and trains in seconds on a 168-hour dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class StepError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class DivergenceError(TrainingError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray          # beta_t, t = 1..T (index 0 is t=1)
    alpha: np.ndarray         # 1 - beta_t
    alpha_bar: np.ndarray     # cumulative product of alpha

    @property
    def T(self) -> int:
        return self.beta.size

    def abar(self, t: int) -> float:
        """alpha_bar at step t, with abar(0) := 1."""
        if not 0 <= t <= self.T:
            raise StepError(f"step {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def make_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.1) -> DiffusionSchedule:
    """Linear beta schedule on (0, 1); the paper leaves the schedule open."""
    if T < 1:
        raise ScheduleError("T must be >= 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ScheduleError("need 0 < beta_min <= beta_max < 1")
    beta = np.linspace(beta_min, beta_max, T)
    alpha = 1.0 - beta
    return DiffusionSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def forward_sample(x0, t: int, noise, sched: DiffusionSchedule) -> np.ndarray:
    """Closed-form corruption x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) noise."""
    x0 = np.asarray(x0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if x0.shape != noise.shape:
        raise ShapeError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
    if not 1 <= t <= sched.T:
        raise StepError(f"step {t} outside [1, {sched.T}]")
    ab = sched.abar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def reverse_step(x_t, t: int, x0_hat, z, sched: DiffusionSchedule,
                 strict_paper: bool = False) -> np.ndarray:
    """One reverse-sampling update from x_t to x_{t-1}.

    Default coefficients are the exact posterior mean/variance of
    q(x_{t-1} | x_t, x0):
        c1 = sqrt(abar_{t-1}) beta_t / (1 - abar_t)
        c2 = sqrt(alpha_t) (1 - abar_{t-1}) / (1 - abar_t)
        sigma^2 = beta_t (1 - abar_{t-1}) / (1 - abar_t)
    ``strict_paper`` reproduces the printed variant that uses sqrt(abar_t)
    in c1 and drops the square root on the noise scale; it does not satisfy
    the t=1 reconstruction identity and exists for comparison only.
    """
    x_t = np.asarray(x_t, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    z = np.asarray(z, dtype=float)
    if not (x_t.shape == x0_hat.shape == z.shape):
        raise ShapeError("x_t, x0_hat and z must share one shape")
    if not 1 <= t <= sched.T:
        raise StepError(f"step {t} outside [1, {sched.T}]")
    ab_t = sched.abar(t)
    ab_prev = sched.abar(t - 1)
    beta_t = float(sched.beta[t - 1])
    alpha_t = float(sched.alpha[t - 1])
    denom = 1.0 - ab_t
    if strict_paper:
        c1 = np.sqrt(ab_t) * beta_t / denom
        noise_scale = (1.0 - ab_prev) / denom * beta_t
    else:
        c1 = np.sqrt(ab_prev) * beta_t / denom
        noise_scale = np.sqrt(beta_t * (1.0 - ab_prev) / denom)
    c2 = np.sqrt(alpha_t) * (1.0 - ab_prev) / denom
    return c1 * x0_hat + c2 * x_t + noise_scale * z


def loss_weight(t: int, sched: DiffusionSchedule, lam: float) -> float:
    """w_t = lam * alpha_t * (1 - abar_t) / beta_t^2."""
    if not 1 <= t <= sched.T:
        raise StepError(f"step {t} outside [1, {sched.T}]")
    beta_t = float(sched.beta[t - 1])
    return lam * float(sched.alpha[t - 1]) * (1.0 - sched.abar(t)) / beta_t**2


def loss_simple(x0, x0_hat, t: int, sched: DiffusionSchedule, lam: float = 1.0) -> float:
    """Weighted MSE: w_t ||x0 - x0_hat||^2."""
    x0 = np.asarray(x0, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    if x0.shape != x0_hat.shape:
        raise ShapeError("x0 and x0_hat shapes differ")
    e = x0 - x0_hat
    return loss_weight(t, sched, lam) * float(e @ e)


def loss_fourier(x0, x0_hat, t: int, sched: DiffusionSchedule, lam: float = 1.0,
                 lam1: float = 1.0, lam2: float = 0.01) -> float:
    """w_t (lam1 ||x0-x0_hat||^2 + lam2 ||DFT(x0)-DFT(x0_hat)||^2), with the
    unnormalized DFT over the full window."""
    x0 = np.asarray(x0, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    if x0.shape != x0_hat.shape:
        raise ShapeError("x0 and x0_hat shapes differ")
    if lam1 < 0 or lam2 < 0:
        raise ValueError("lam1 and lam2 must be >= 0")
    e = x0 - x0_hat
    fe = np.fft.fft(e)
    freq = float(np.sum(fe.real**2 + fe.imag**2))
    return loss_weight(t, sched, lam) * (lam1 * float(e @ e) + lam2 * freq)


def _sinusoid(value: float, dim: int) -> np.ndarray:
    """Interleaved sin/cos features with geometric wavelengths."""
    out = np.empty(dim)
    for i in range(dim):
        base = 10000.0 ** ((i - (i % 2)) / dim)
        ang = value / base
        out[i] = np.sin(ang) if i % 2 == 0 else np.cos(ang)
    return out


@dataclass
class DenoiserParams:
    """Pointwise residual MLP mapping (x_t value, position, step) -> x0_hat."""

    window: int
    hidden: int
    blocks: int
    pe_dim: int = 8
    emb_dim: int = 8
    weights: dict = field(default_factory=dict)
    loss_trace: list = field(default_factory=list, repr=False, compare=False)

    @property
    def d_in(self) -> int:
        return 1 + self.pe_dim + self.emb_dim

    def n_params(self) -> int:
        return sum(v.size for v in self.weights.values())

    def validate(self):
        req = ["w_in", "b_in", "w_out", "b_out"] + [
            f"w_b{i}" for i in range(self.blocks)] + [
            f"b_b{i}" for i in range(self.blocks)]
        for key in req:
            if key not in self.weights:
                raise ShapeError(f"missing weight {key}")
            if not np.all(np.isfinite(self.weights[key])):
                raise ShapeError(f"non-finite weight {key}")
        if self.weights["w_in"].shape != (self.hidden, self.d_in):
            raise ShapeError("w_in shape mismatch")
        if self.weights["w_out"].shape != (1, self.hidden):
            raise ShapeError("w_out shape mismatch")


def init_params(window: int, hidden: int = 64, blocks: int = 3, pe_dim: int = 8,
                emb_dim: int = 8, seed: int = 0) -> DenoiserParams:
    rng = np.random.default_rng([int(seed), 0xD1FF])
    p = DenoiserParams(window=window, hidden=hidden, blocks=blocks,
                       pe_dim=pe_dim, emb_dim=emb_dim)
    d_in = p.d_in
    w = {
        "w_in": rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(hidden, d_in)),
        "b_in": np.zeros(hidden),
        "w_out": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(1, hidden)),
        "b_out": np.zeros(1),
    }
    for i in range(blocks):
        w[f"w_b{i}"] = rng.normal(0.0, 0.5 / np.sqrt(hidden), size=(hidden, hidden))
        w[f"b_b{i}"] = np.zeros(hidden)
    p.weights = w
    return p


def _features(params: DenoiserParams, x_t: np.ndarray, t: int) -> np.ndarray:
    W = params.window
    pe = np.stack([_sinusoid(pos, params.pe_dim) for pos in range(W)])
    se = np.broadcast_to(_sinusoid(float(t), params.emb_dim), (W, params.emb_dim))
    return np.hstack([x_t.reshape(W, 1), pe, se])


def _forward(params: DenoiserParams, x_t: np.ndarray, t: int, cache: bool = False):
    X = _features(params, x_t, t)
    w = params.weights
    a0 = X @ w["w_in"].T + w["b_in"]
    h = np.tanh(a0)
    acts = [(X, a0, h)]
    for i in range(params.blocks):
        a = h @ w[f"w_b{i}"].T + w[f"b_b{i}"]
        h_new = h + np.tanh(a)
        acts.append((h, a, h_new))
        h = h_new
    y = (h @ w["w_out"].T + w["b_out"]).ravel()
    if cache:
        return y, acts, h
    return y


def denoise_predict(params: DenoiserParams, x_t, t: int) -> np.ndarray:
    """Deterministic estimate x0_hat(x_t, t)."""
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    if x_t.size != params.window:
        raise ShapeError(f"window length {x_t.size} != params.window {params.window}")
    if not np.all(np.isfinite(x_t)):
        raise ShapeError("x_t must be finite")
    return _forward(params, x_t, t)


def _backward(params: DenoiserParams, acts, h_last, dy: np.ndarray) -> dict:
    """Gradients of a scalar loss wrt every weight, given dL/dy per position."""
    w = params.weights
    g = {}
    g["w_out"] = dy[None, :] @ h_last
    g["b_out"] = np.array([dy.sum()])
    dh = dy[:, None] * w["w_out"][0][None, :]
    for i in range(params.blocks - 1, -1, -1):
        h_in, a, _ = acts[i + 1]
        da = dh * (1.0 - np.tanh(a) ** 2)
        g[f"w_b{i}"] = da.T @ h_in
        g[f"b_b{i}"] = da.sum(axis=0)
        dh = dh + da @ w[f"w_b{i}"]
    X, a0, _ = acts[0]
    da0 = dh * (1.0 - np.tanh(a0) ** 2)
    g["w_in"] = da0.T @ X
    g["b_in"] = da0.sum(axis=0)
    return g


def loss_and_grads(params: DenoiserParams, x0: np.ndarray, t: int, noise: np.ndarray,
                   sched: DiffusionSchedule, lam: float, lam1: float, lam2: float):
    """Fourier-augmented training loss for one window and its gradients.

    By Parseval, the unnormalized-DFT term equals W ||e||^2, so the gradient
    of the full loss in e is -2 w_t (lam1 + lam2 W) e.
    """
    x_t = forward_sample(x0, t, noise, sched)
    y, acts, h_last = _forward(params, x_t, t, cache=True)
    e = x0 - y
    wt = loss_weight(t, sched, lam)
    W = x0.size
    loss = wt * (lam1 * float(e @ e) + lam2 * W * float(e @ e))
    dy = -2.0 * wt * (lam1 + lam2 * W) * e
    return loss, _backward(params, acts, h_last, dy)


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 2
    learning_rate: float = 1e-5
    accumulation: int = 2          # gradient accumulation steps
    plateau_threshold: float = 1e-1
    plateau_patience: int = 20
    plateau_factor: float = 0.5
    min_lr: float = 1e-8
    lam: float = 0.01              # weighted-MSE constant
    lam1: float = 1.0              # time-domain weight
    lam2: float = 0.01             # frequency-domain weight
    seed: int = 0
    hidden: int = 64
    blocks: int = 3
    pe_dim: int = 8
    emb_dim: int = 8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainingError("learning rate must be positive")
        if self.accumulation < 1:
            raise TrainingError("accumulation must be >= 1")
        if min(self.lam, self.lam1, self.lam2) < 0:
            raise TrainingError("loss weights must be >= 0")


def train(train_windows, cfg: TrainConfig, sched: DiffusionSchedule) -> DenoiserParams:
    """SGD training loop over normalized windows.

    Steps are applied every ``cfg.accumulation`` mini-batches; the learning
    rate halves when the epoch loss stops improving by more than the
    relative plateau threshold.  Fully deterministic given cfg.seed.
    """
    windows = np.asarray(train_windows, dtype=float)
    if windows.ndim != 2 or windows.shape[0] < 1:
        raise TrainingError("need at least one training window")
    if windows.min() < -1e-9 or windows.max() > 1.0 + 1e-9:
        raise TrainingError("windows must be min-max normalized to [0, 1]")

    n, W = windows.shape
    params = init_params(W, hidden=cfg.hidden, blocks=cfg.blocks,
                         pe_dim=cfg.pe_dim, emb_dim=cfg.emb_dim, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 0x7E41])
    lr = cfg.learning_rate
    best = np.inf
    since_best = 0
    acc = {k: np.zeros_like(v) for k, v in params.weights.items()}
    acc_batches = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo: lo + cfg.batch_size]
            grads = {k: np.zeros_like(v) for k, v in params.weights.items()}
            batch_loss = 0.0
            for i in batch:
                t = int(rng.integers(1, sched.T + 1))
                noise = rng.standard_normal(W)
                loss, g = loss_and_grads(params, windows[i], t, noise, sched,
                                         cfg.lam, cfg.lam1, cfg.lam2)
                batch_loss += loss
                for k in grads:
                    grads[k] += g[k]
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            scale = 1.0 / batch.size
            for k in acc:
                acc[k] += grads[k] * scale
            acc_batches += 1
            epoch_loss += batch_loss
            if acc_batches >= cfg.accumulation:
                step = lr / acc_batches
                for k in params.weights:
                    params.weights[k] -= step * acc[k]
                    acc[k][...] = 0.0
                acc_batches = 0
        epoch_loss /= n
        params.loss_trace.append(float(epoch_loss))

        if epoch_loss < best * (1.0 - cfg.plateau_threshold):
            best = epoch_loss
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.plateau_patience:
                lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                since_best = 0
    return params


def generate(params: DenoiserParams, sched: DiffusionSchedule, n: int, W: int,
             seed: int) -> np.ndarray:
    """Draw n windows: start at pure noise, run the reverse chain with the
    trained denoiser, clamp to [0, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if W != params.window:
        raise ShapeError(f"W {W} != params.window {params.window}")
    params.validate()
    out = np.empty((n, W))
    for s in range(n):
        rng = np.random.default_rng([int(seed), s, 0x6E9])
        x = rng.standard_normal(W)
        for t in range(sched.T, 0, -1):
            x0_hat = denoise_predict(params, x, t)
            z = rng.standard_normal(W) if t > 1 else np.zeros(W)
            x = reverse_step(x, t, x0_hat, z, sched)
        out[s] = np.clip(x, 0.0, 1.0)
    return out


CHECKPOINT_MAGIC = "diffmpc-denoiser v1"


def save_checkpoint(path, params: DenoiserParams, sched: DiffusionSchedule) -> None:
    with open(path, "w") as f:
        f.write(CHECKPOINT_MAGIC + "\n")
        f.write("window %d\nhidden %d\nblocks %d\npe_dim %d\nemb_dim %d\n"
                % (params.window, params.hidden, params.blocks,
                   params.pe_dim, params.emb_dim))
        f.write("T %d\nbeta_min %.17g\nbeta_max %.17g\n"
                % (sched.T, sched.beta[0], sched.beta[-1]))
        for key in sorted(params.weights):
            v = params.weights[key]
            f.write("tensor %s %s\n" % (key, " ".join(map(str, v.shape))))
            f.write(" ".join("%.17g" % x for x in v.ravel()) + "\n")


def load_checkpoint(path) -> tuple[DenoiserParams, DiffusionSchedule]:
    with open(path) as f:
        magic = f.readline().rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad checkpoint header {magic!r}")
        meta = {}
        tensors = {}
        line = f.readline()
        while line:
            parts = line.split()
            if not parts:
                line = f.readline()
                continue
            if parts[0] == "tensor":
                key = parts[1]
                shape = tuple(int(s) for s in parts[2:])
                vals = np.asarray([float(v) for v in f.readline().split()])
                tensors[key] = vals.reshape(shape)
            else:
                meta[parts[0]] = float(parts[1])
            line = f.readline()
    try:
        params = DenoiserParams(
            window=int(meta["window"]), hidden=int(meta["hidden"]),
            blocks=int(meta["blocks"]), pe_dim=int(meta["pe_dim"]),
            emb_dim=int(meta["emb_dim"]), weights=tensors)
        sched = make_schedule(int(meta["T"]), meta["beta_min"], meta["beta_max"])
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing field {exc}") from exc
    params.validate()
    return params, sched
