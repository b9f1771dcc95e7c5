"""Transformer VAE over loop sequences.

Encoder prepends a learned aggregate token whose final-layer output
parameterizes a Gaussian posterior; the decoder is causally masked and
conditioned on the latent code through a tanh start embedding at position 0.
Includes losses, KL annealing, the LR schedule, the training loop, and a
checksummed binary checkpoint format.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    CheckpointError,
    InvalidInputError,
    NumericalHealthError,
    SequenceLengthError,
    ShapeError,
)
from .nn import (
    MLP,
    Adam,
    Linear,
    ParamStore,
    Tensor,
    TransformerLayer,
    causal_mask,
    concat,
    positional_encoding,
)
from .sequence import LoopSequence

CHECKPOINT_MAGIC = b"LOOPFORGE-CKPT\n"
CHECKPOINT_VERSION = 1
LOGVAR_MIN = -20.0
LOGVAR_MAX = 10.0
FLAG_PROB_EPS = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    n_points: int = 32
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ffn_dim: int = 128
    latent_dim: int = 16
    max_seq_len: int = 135
    mlp_hidden: tuple = (64,)
    beta_kl: float = 1.0
    m_kl: float = 0.0
    eta0: float = 0.01
    anneal_r: float = 0.9999
    base_lr: float = 7e-5
    warm_epochs: int = 70
    rampdown_epochs: int = 7230
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if self.n_points < 3:
            raise InvalidInputError("n_points must be at least 3")
        if self.d_model < 1 or self.d_model % self.n_heads != 0:
            raise InvalidInputError("d_model must be positive and divisible by n_heads")
        if self.n_layers < 1 or self.ffn_dim < 1:
            raise InvalidInputError("n_layers and ffn_dim must be positive")
        if self.latent_dim < 1:
            raise InvalidInputError("latent_dim must be at least 1")
        if self.max_seq_len < 1 or self.batch_size < 1:
            raise InvalidInputError("max_seq_len and batch_size must be positive")
        if any(h < 1 for h in self.mlp_hidden):
            raise InvalidInputError("mlp_hidden sizes must be positive")
        if self.beta_kl < 0 or self.m_kl < 0:
            raise InvalidInputError("beta_kl and m_kl must be nonnegative")
        if not 0.0 < self.eta0 <= 1.0 or not 0.0 < self.anneal_r <= 1.0:
            raise InvalidInputError("eta0 and anneal_r must lie in (0, 1]")
        if self.base_lr <= 0 or self.warm_epochs < 0 or self.rampdown_epochs < 1:
            raise InvalidInputError("invalid learning-rate schedule parameters")

    @property
    def token_dim(self):
        return 2 * self.n_points + 1

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidInputError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def full_scale_config():
    """Full-scale preset: 8 layers, 8 heads, 512 wide, 64 latent dims."""
    return ModelConfig(
        d_model=512,
        n_layers=8,
        n_heads=8,
        ffn_dim=512,
        latent_dim=64,
        base_lr=7e-5,
        warm_epochs=70,
        rampdown_epochs=7230,
        batch_size=32,
    )


@dataclass
class Posterior:
    mu: Tensor
    logvar: Tensor


def _as_token_array(seq, token_dim):
    arr = seq.tokens if isinstance(seq, LoopSequence) else np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != token_dim:
        raise ShapeError(f"expected (T, {token_dim}) tokens, got {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidInputError("sequence must contain at least one token")
    return arr


class LoopModel:
    """Encoder/decoder pair sharing a ParamStore; all weights float64."""

    def __init__(self, config, rng=None):
        self.config = config
        rng = np.random.default_rng(config.seed) if rng is None else rng
        store = ParamStore()
        self.store = store
        d, td = config.d_model, config.token_dim
        hidden = list(config.mlp_hidden)

        self.enc_proj = Linear(store, "enc.in_proj", td, d, rng)
        # aggregate summary slot, initialized to zero and learned
        self.special = store.register("enc.special", np.zeros((1, d)))
        self.enc_layers = [
            TransformerLayer(store, f"enc.layer{i}", d, config.n_heads, config.ffn_dim, rng)
            for i in range(config.n_layers)
        ]
        self.mu_head = MLP(store, "enc.mu_head", [d] + hidden + [config.latent_dim], rng)
        self.logvar_head = MLP(store, "enc.logvar_head", [d] + hidden + [config.latent_dim], rng)

        self.start_head = MLP(store, "dec.start_head", [config.latent_dim] + hidden + [d], rng, final="tanh")
        self.dec_proj = Linear(store, "dec.in_proj", td, d, rng)
        self.dec_layers = [
            TransformerLayer(store, f"dec.layer{i}", d, config.n_heads, config.ffn_dim, rng)
            for i in range(config.n_layers)
        ]
        self.out_head = Linear(store, "dec.out_head", d, td, rng)

        self._pe = positional_encoding(config.max_seq_len + 1, d)
        self._masks = {}

    def _check_length(self, t):
        if t > self.config.max_seq_len:
            raise SequenceLengthError(
                f"sequence length {t} exceeds max_seq_len {self.config.max_seq_len}"
            )

    def _mask(self, t):
        if t not in self._masks:
            self._masks[t] = causal_mask(t)
        return self._masks[t]

    def encode(self, seq):
        """Tokens -> posterior (mu, logvar), logvar clamped to [-20, 10]."""
        arr = _as_token_array(seq, self.config.token_dim)
        t = arr.shape[0]
        self._check_length(t)
        x = self.enc_proj(Tensor(arr))
        h = concat([self.special, x], axis=0) + self._pe[: t + 1]
        for layer in self.enc_layers:
            h = layer(h)
        slot = h[0:1, :]
        mu = self.mu_head(slot).reshape(self.config.latent_dim)
        logvar = self.logvar_head(slot).reshape(self.config.latent_dim)
        return Posterior(mu, logvar.clip(LOGVAR_MIN, LOGVAR_MAX))

    def decoder_start(self, z):
        """Latent code -> tanh start embedding, shape (1, d_model)."""
        zt = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=np.float64))
        return self.start_head(zt.reshape(1, self.config.latent_dim))

    def decode_teacher_forced(self, z, seq):
        """Ground-truth rows shifted right behind the start embedding.

        Returns (coords (T, 2N), flag_probs (T,)); output row i predicts
        token i+1, so the causal mask keeps each prediction blind to its
        own target and everything after it.
        """
        arr = _as_token_array(seq, self.config.token_dim)
        t = arr.shape[0]
        self._check_length(t)
        rows = self.decoder_start(z)
        if t > 1:
            rows = concat([rows, self.dec_proj(Tensor(arr[:-1]))], axis=0)
        h = rows + self._pe[:t]
        mask = self._mask(t)
        for layer in self.dec_layers:
            h = layer(h, mask)
        out = self.out_head(h)
        coords = out[:, : 2 * self.config.n_points]
        flag_prob = out[:, 2 * self.config.n_points].sigmoid()
        return coords, flag_prob

    def predict_tokens(self, z, seq):
        """Teacher-forced predictions packed as a (T, 2N+1) array."""
        coords, flag_prob = self.decode_teacher_forced(z, seq)
        return np.concatenate([coords.data, flag_prob.data[:, None]], axis=1)

    def predict_next(self, z, emitted):
        """Next-token prediction given the emitted prefix (L tokens, L >= 0).

        Runs the decoder on [start(z), x_1..x_L] and returns the raw last-row
        output as (coords (2N,), flag_prob float). Feeding the same prefix
        through decode_teacher_forced reproduces this row bit-for-bit.
        """
        rows = self.decoder_start(z)
        if len(emitted):
            arr = np.asarray(emitted, dtype=np.float64).reshape(-1, self.config.token_dim)
            self._check_length(arr.shape[0] + 1)
            rows = concat([rows, self.dec_proj(Tensor(arr))], axis=0)
        t = rows.shape[0]
        h = rows + self._pe[:t]
        mask = self._mask(t)
        for layer in self.dec_layers:
            h = layer(h, mask)
        out = self.out_head(h)
        coords = out[:, : 2 * self.config.n_points].data[t - 1].copy()
        flag_prob = float(out[:, 2 * self.config.n_points].sigmoid().data[t - 1])
        return coords, flag_prob


def reparameterize(posterior, rng):
    """z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) from the given rng."""
    eps = rng.standard_normal(posterior.mu.shape[0])
    return posterior.mu + (posterior.logvar * 0.5).exp() * Tensor(eps)


def loss_kl(posterior, beta_eff, m_kl, latent_dim):
    """(beta_eff / N_z) * max(sum_i -(1 + logvar - mu^2 - exp logvar) / 2, m_kl)."""
    mu, lv = posterior.mu, posterior.logvar
    if not isinstance(mu, Tensor):
        mu = Tensor(np.asarray(mu, dtype=np.float64))
    if not isinstance(lv, Tensor):
        lv = Tensor(np.asarray(lv, dtype=np.float64))
    ltilde = ((lv.exp() + mu * mu - lv - 1.0) * 0.5).sum()
    return ltilde.maximum(float(m_kl)) * (float(beta_eff) / float(latent_dim))


def loss_recon(coords_pred, flag_prob, targets):
    """Squared L2 over coordinates plus flag BCE, summed over time steps."""
    targets = np.asarray(targets, dtype=np.float64)
    two_n = targets.shape[1] - 1
    diff = coords_pred - Tensor(targets[:, :two_n])
    l2 = (diff * diff).sum()
    p = flag_prob.clip(FLAG_PROB_EPS, 1.0 - FLAG_PROB_EPS)
    t = targets[:, two_n]
    bce = -(Tensor(t) * p.log() + Tensor(1.0 - t) * (1.0 - p).log()).sum()
    return l2 + bce


def loss_gradcheck(cfg, t=6, probes=200, h=1e-4, seed=0):
    """Finite-difference check of the full loss gradient on random tokens.

    Builds a fresh model from cfg, freezes one reparameterization draw, and
    probes random parameters; returns the max relative error. The default h
    suits loss magnitudes around 1e3 (cube-root rule); much smaller values
    sink the difference quotient into float64 roundoff.
    """
    from .nn import gradcheck as _gradcheck

    model = LoopModel(cfg)
    rng = np.random.default_rng(cfg.seed)
    coords = rng.normal(0.5, 0.25, size=(t, 2 * cfg.n_points))
    flags = np.concatenate([[1.0], rng.integers(0, 2, size=t - 1).astype(np.float64)])
    tokens = np.concatenate([coords, flags[:, None]], axis=1)
    eps = rng.standard_normal(cfg.latent_dim)

    def loss_fn():
        post = model.encode(tokens)
        z = post.mu + (post.logvar * 0.5).exp() * Tensor(eps)
        pred, probs = model.decode_teacher_forced(z, tokens)
        return loss_recon(pred, probs, tokens) + loss_kl(post, 1.0, cfg.m_kl, cfg.latent_dim)

    return float(_gradcheck(loss_fn, model.store, probes=probes, h=h, seed=seed))


def kl_anneal(step, cfg):
    """beta_eff = beta_kl * (1 - (1 - eta0) * r^step); monotone toward beta_kl."""
    return cfg.beta_kl * (1.0 - (1.0 - cfg.eta0) * cfg.anneal_r ** step)


def lr_schedule(epoch, cfg):
    """base_lr through the warm epochs, then linear to exactly 0 at the ramp end."""
    if epoch < cfg.warm_epochs:
        return cfg.base_lr
    frac = (epoch - cfg.warm_epochs + 1) / cfg.rampdown_epochs
    return cfg.base_lr * max(0.0, 1.0 - frac)


def train(
    sequences,
    cfg,
    out_dir=None,
    epochs=None,
    checkpoint_every=100,
    extras=None,
    progress=None,
):
    """Seeded minibatch training of L_R + L_KL with annealed beta.

    Returns (model, log_records). When out_dir is given, writes train_log.ndjson
    incrementally plus periodic and final checkpoints; a non-finite loss aborts
    with a reference to the last good checkpoint.
    """
    arrays = [_as_token_array(s, cfg.token_dim) for s in sequences]
    if not arrays:
        raise InvalidInputError("training set is empty")
    if epochs is None:
        epochs = cfg.warm_epochs + cfg.rampdown_epochs

    model = LoopModel(cfg)
    opt = Adam(model.store)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)
    eps_rng = np.random.default_rng(cfg.seed + 2)

    log_path = None
    log_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "train_log.ndjson")
        log_file = open(log_path, "w", encoding="utf-8")

    records = []
    last_good = None
    step = 0
    n = len(arrays)
    try:
        for epoch in range(epochs):
            lr = lr_schedule(epoch, cfg)
            beta_epoch = kl_anneal(step, cfg)
            order = shuffle_rng.permutation(n)
            sum_lr = 0.0
            sum_lkl = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                beta_eff = kl_anneal(step, cfg)
                try:
                    total = None
                    for i in idx:
                        post = model.encode(arrays[i])
                        z = reparameterize(post, eps_rng)
                        coords, probs = model.decode_teacher_forced(z, arrays[i])
                        l_r = loss_recon(coords, probs, arrays[i])
                        l_k = loss_kl(post, beta_eff, cfg.m_kl, cfg.latent_dim)
                        item = l_r + l_k
                        total = item if total is None else total + item
                        sum_lr += float(l_r.data)
                        sum_lkl += float(l_k.data)
                    total = total * (1.0 / len(idx))
                    model.store.zero_grad()
                    total.backward()
                    opt.step(lr)
                except NumericalHealthError as exc:
                    raise NumericalHealthError(
                        f"training aborted at epoch {epoch}, step {step}: {exc}",
                        last_good_checkpoint=last_good,
                    ) from exc
                step += 1
            record = {
                "epoch": epoch,
                "L_R": sum_lr / n,
                "L_KL": sum_lkl / n,
                "beta_eff": beta_epoch,
                "lr": lr,
            }
            records.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if out_dir is not None and (
                (epoch + 1) % checkpoint_every == 0 or epoch == epochs - 1
            ):
                path = os.path.join(out_dir, f"checkpoint_{epoch + 1:06d}.ckpt")
                save_checkpoint(model, path, step=step, extras=extras)
                last_good = path
            if progress is not None:
                progress(record)
    finally:
        if log_file is not None:
            log_file.close()
    return model, records


def save_checkpoint(model, path, step=0, extras=None):
    """Magic + length-prefixed JSON header + named float64 LE tensor blocks.

    Each block's CRC32 is recorded in the header; the write is atomic
    (temp file then rename).
    """
    names = model.store.names()
    blocks = []
    entries = []
    for name in names:
        data = np.ascontiguousarray(model.store[name].data, dtype="<f8")
        raw = data.tobytes()
        blocks.append(raw)
        entries.append({"name": name, "shape": list(data.shape), "crc32": zlib.crc32(raw)})
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "step": int(step),
        "extras": extras if extras is not None else {},
        "tensors": entries,
    }
    payload = json.dumps(header).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)
        for raw in blocks:
            f.write(raw)
    os.replace(tmp, path)
    return path


def load_checkpoint(path, expected_config=None):
    """Inverse of save_checkpoint; returns (model, step, extras).

    Rejects bad magic, unknown versions, config mismatches against
    expected_config, CRC failures, and missing/extra/misshapen tensors.
    """
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    if len(data) < off + 8:
        raise CheckpointError("truncated checkpoint header")
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    if len(data) < off + hlen:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    off += hlen

    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r}")
    try:
        cfg = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, InvalidInputError) as exc:
        raise CheckpointError(f"invalid checkpoint config: {exc}") from exc
    if expected_config is not None and cfg != expected_config:
        raise CheckpointError("checkpoint config does not match the expected config")

    model = LoopModel(cfg)
    seen = set()
    for entry in header.get("tensors", []):
        name, shape, crc = entry["name"], tuple(entry["shape"]), entry["crc32"]
        if name not in model.store:
            raise CheckpointError(f"unexpected tensor {name!r} in checkpoint")
        target = model.store[name]
        if target.data.shape != shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {list(shape)}, expected {list(target.data.shape)}"
            )
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        raw = data[off : off + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"truncated block for tensor {name!r}")
        if zlib.crc32(raw) != crc:
            raise CheckpointError(f"checksum mismatch for tensor {name!r}")
        target.data[...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
        seen.add(name)
        off += nbytes
    missing = [n for n in model.store.names() if n not in seen]
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {missing}")
    if off != len(data):
        raise CheckpointError("trailing bytes after tensor blocks")
    return model, header["step"], header["extras"]
