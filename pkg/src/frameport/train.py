"""Domain-adversarial alignment of keyword embeddings.

Each training step draws one independent batch per framework, runs a
single forward pass that yields all four losses, then applies three
in-order parameter updates from gradients taken at the step's starting
point:

1. generator + both output-embedding matrices, on L_CE_1 + L_CE_2;
2. discriminator, on L_D (hidden states treated as constants);
3. generator again, on L_G (the reversed-label loss), through the
   discriminator as it stood during the forward pass.

The three roles keep separate Adam states because the two generator
losses run at different scales. Contextual embeddings are inputs only;
no gradient ever reaches the provider.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from frameport import nn
from frameport.canon import ApiKeyword
from frameport.dictionary import (
    KeywordDictionary,
    dictionary_pairs,
    vocab_index,
)
from frameport.errors import (
    ConfigError,
    DimensionMismatch,
    EmptyDictionaryError,
)

LR_GRID = (2e-4, 5e-4, 1e-3)
BATCH_GRID = (64, 128, 256)
DEFAULT_TOTAL_SAMPLES = 1_536_000


@dataclass(frozen=True)
class TrainConfig:
    d: int = 64
    peak_lr: float = 1e-3
    batch_size: int = 128
    total_samples: int = DEFAULT_TOTAL_SAMPLES
    warmup_fraction: float = 0.10
    label_smoothing: float = 0.1
    dropout: float = 0.1
    leaky_slope: float = 0.01
    gen_hidden: int = 1
    disc_hidden: int = 2
    seed: int = 10
    checkpoint_every: int = 500

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.total_samples < 0:
            raise ConfigError("need batch_size >= 1 and total_samples >= 0")

    @property
    def total_steps(self) -> int:
        return self.total_samples // self.batch_size

    @property
    def schedule(self) -> nn.LrSchedule:
        return nn.LrSchedule(
            peak_lr=self.peak_lr,
            total_steps=self.total_steps,
            warmup_fraction=self.warmup_fraction,
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "peak_lr": self.peak_lr,
            "batch_size": self.batch_size,
            "total_samples": self.total_samples,
            "warmup_fraction": self.warmup_fraction,
            "label_smoothing": self.label_smoothing,
            "dropout": self.dropout,
            "leaky_slope": self.leaky_slope,
            "gen_hidden": self.gen_hidden,
            "disc_hidden": self.disc_hidden,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@dataclass
class AlignmentModel:
    """Generator, discriminator, and per-framework output embeddings.

    output_embeddings[l] has shape (d, m_l); column i is keyword i's
    vector, and hidden-state logits are z @ E.
    """

    generator: nn.Mlp
    discriminator: nn.Mlp
    output_embeddings: list[np.ndarray]

    def __post_init__(self) -> None:
        d = self.generator.dims[-1]
        if self.discriminator.dims[0] != d or self.discriminator.dims[-1] != 1:
            raise DimensionMismatch(
                f"discriminator dims {self.discriminator.dims} do not accept d={d}"
            )
        for E in self.output_embeddings:
            if E.ndim != 2 or E.shape[0] != d:
                raise DimensionMismatch(f"output embedding shape {E.shape}, d={d}")

    @classmethod
    def create(
        cls,
        cfg: TrainConfig,
        d_b: int,
        vocab_sizes: Sequence[int],
        rng: np.random.Generator,
    ) -> "AlignmentModel":
        gen = nn.Mlp.create(
            [d_b] + [cfg.d] * cfg.gen_hidden + [cfg.d],
            activation=nn.RELU,
            dropout=cfg.dropout,
            rng=rng,
        )
        disc = nn.Mlp.create(
            [cfg.d] * (cfg.disc_hidden + 1) + [1],
            activation=nn.LEAKY_RELU,
            leaky_slope=cfg.leaky_slope,
            dropout=cfg.dropout,
            rng=rng,
        )
        embeds = [
            (rng.standard_normal((cfg.d, m)) / np.sqrt(cfg.d)).astype(np.float32)
            for m in vocab_sizes
        ]
        return cls(generator=gen, discriminator=disc, output_embeddings=embeds)

    def parameters(self) -> list[np.ndarray]:
        return (
            self.generator.parameters()
            + self.discriminator.parameters()
            + list(self.output_embeddings)
        )

    def to_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "output_embeddings": [nn.encode_array(E) for E in self.output_embeddings],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AlignmentModel":
        return cls(
            generator=nn.Mlp.from_dict(doc["generator"]),
            discriminator=nn.Mlp.from_dict(doc["discriminator"]),
            output_embeddings=[
                nn.decode_array(E) for E in doc["output_embeddings"]
            ],
        )


@dataclass(frozen=True)
class TrainBatch:
    """One independently sampled batch per framework."""

    h1: np.ndarray
    y1: np.ndarray
    h2: np.ndarray
    y2: np.ndarray

    def __post_init__(self) -> None:
        if self.h1.ndim != 2 or self.h2.ndim != 2:
            raise DimensionMismatch("batch embeddings must be 2-d")
        if len(self.y1) != len(self.h1) or len(self.y2) != len(self.h2):
            raise DimensionMismatch("labels do not match embeddings")


@dataclass
class Optimizers:
    joint: nn.AdamState
    disc: nn.AdamState
    gen_adv: nn.AdamState

    @classmethod
    def init(cls, model: AlignmentModel) -> "Optimizers":
        return cls(
            joint=nn.AdamState.init(
                model.generator.parameters() + list(model.output_embeddings)
            ),
            disc=nn.AdamState.init(model.discriminator.parameters()),
            gen_adv=nn.AdamState.init(model.generator.parameters()),
        )

    def to_dict(self) -> dict:
        return {
            "joint": self.joint.to_dict(),
            "disc": self.disc.to_dict(),
            "gen_adv": self.gen_adv.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Optimizers":
        return cls(
            joint=nn.AdamState.from_dict(doc["joint"]),
            disc=nn.AdamState.from_dict(doc["disc"]),
            gen_adv=nn.AdamState.from_dict(doc["gen_adv"]),
        )


def _smoothed_targets(n1: int, n2: int, smoothing: float) -> np.ndarray:
    t = np.concatenate([np.zeros(n1), np.ones(n2)])
    return t * (1.0 - smoothing) + smoothing / 2.0


@dataclass
class _ForwardState:
    z1: np.ndarray
    z2: np.ndarray
    gen_cache1: nn.ForwardCache
    gen_cache2: nn.ForwardCache
    dlogits1: np.ndarray
    dlogits2: np.ndarray
    disc_cache: nn.ForwardCache
    d_grad_true: np.ndarray
    d_grad_rev: np.ndarray
    losses: dict[str, float]


def _forward_all(
    model: AlignmentModel,
    batch: TrainBatch,
    label_smoothing: float,
    train_mode: bool,
    rng: np.random.Generator | None,
) -> _ForwardState:
    E1, E2 = model.output_embeddings
    z1, c1 = nn.forward(model.generator, batch.h1, train_mode=train_mode, rng=rng)
    z2, c2 = nn.forward(model.generator, batch.h2, train_mode=train_mode, rng=rng)
    l_ce1, dlogits1 = nn.softmax_cross_entropy(z1 @ E1, batch.y1, label_smoothing)
    l_ce2, dlogits2 = nn.softmax_cross_entropy(z2 @ E2, batch.y2, label_smoothing)
    d_in = np.concatenate([z1, z2], axis=0)
    d_logit, dc = nn.forward(model.discriminator, d_in, train_mode=train_mode, rng=rng)
    targets = _smoothed_targets(len(z1), len(z2), label_smoothing)
    l_d, g_true = nn.binary_cross_entropy(d_logit, targets)
    l_g, g_rev = nn.binary_cross_entropy(d_logit, 1.0 - targets)
    return _ForwardState(
        z1=z1,
        z2=z2,
        gen_cache1=c1,
        gen_cache2=c2,
        dlogits1=dlogits1,
        dlogits2=dlogits2,
        disc_cache=dc,
        d_grad_true=g_true,
        d_grad_rev=g_rev,
        losses={"L_CE_1": l_ce1, "L_CE_2": l_ce2, "L_D": l_d, "L_G": l_g},
    )


def losses(
    model: AlignmentModel,
    batch: TrainBatch,
    label_smoothing: float = 0.0,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """All four losses on one batch, without touching any parameter."""
    return _forward_all(model, batch, label_smoothing, train_mode, rng).losses


def gradients(
    model: AlignmentModel,
    batch: TrainBatch,
    label_smoothing: float = 0.0,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, list[np.ndarray]], dict[str, float]]:
    """Per-role gradients from one shared forward pass.

    joint: d(L_CE_1 + L_CE_2) over generator params then E1, E2;
    disc: dL_D over discriminator params (hidden states constant);
    gen_adv: dL_G over generator params, through the forward-time
    discriminator.
    """
    E1, E2 = model.output_embeddings
    fs = _forward_all(model, batch, label_smoothing, train_mode, rng)

    dE1 = fs.z1.T @ fs.dlogits1
    dE2 = fs.z2.T @ fs.dlogits2
    dz1_ce = fs.dlogits1 @ E1.T
    dz2_ce = fs.dlogits2 @ E2.T
    g_gen1, _ = nn.backward(model.generator, fs.gen_cache1, dz1_ce)
    g_gen2, _ = nn.backward(model.generator, fs.gen_cache2, dz2_ce)
    joint_grads = [a + b for a, b in zip(g_gen1, g_gen2)] + [dE1, dE2]

    g_disc, _ = nn.backward(model.discriminator, fs.disc_cache, fs.d_grad_true)

    _, dz_adv = nn.backward(model.discriminator, fs.disc_cache, fs.d_grad_rev)
    n1 = len(fs.z1)
    g_adv1, _ = nn.backward(model.generator, fs.gen_cache1, dz_adv[:n1])
    g_adv2, _ = nn.backward(model.generator, fs.gen_cache2, dz_adv[n1:])
    adv_grads = [a + b for a, b in zip(g_adv1, g_adv2)]

    return (
        {"joint": joint_grads, "disc": g_disc, "gen_adv": adv_grads},
        dict(fs.losses),
    )


def train_step(
    model: AlignmentModel,
    batch: TrainBatch,
    opt: Optimizers,
    cfg: TrainConfig,
    lr: float,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """One step: gradients at the starting parameters, then the three
    role updates in order."""
    grads, step_losses = gradients(
        model, batch, cfg.label_smoothing, train_mode=cfg.dropout > 0, rng=rng
    )
    E1, E2 = model.output_embeddings
    joint_params = model.generator.parameters() + [E1, E2]
    nn.adam_step(joint_params, grads["joint"], opt.joint, lr)
    nn.adam_step(model.discriminator.parameters(), grads["disc"], opt.disc, lr)
    nn.adam_step(model.generator.parameters(), grads["gen_adv"], opt.gen_adv, lr)
    return step_losses


class BatchSampler:
    """Uniform with-replacement sampling, one independent stream per side."""

    def __init__(
        self,
        H1: np.ndarray,
        y1: np.ndarray,
        H2: np.ndarray,
        y2: np.ndarray,
        batch_size: int,
        seed: int | np.random.SeedSequence = 0,
    ):
        if len(H1) == 0 or len(H2) == 0:
            raise ConfigError("cannot sample from an empty corpus side")
        self.H1, self.y1, self.H2, self.y2 = H1, y1, H2, y2
        self.batch_size = batch_size
        ss = (
            seed
            if isinstance(seed, np.random.SeedSequence)
            else np.random.SeedSequence(seed)
        )
        c1, c2 = ss.spawn(2)
        self._rng1 = np.random.default_rng(c1)
        self._rng2 = np.random.default_rng(c2)

    def next_batch(self) -> TrainBatch:
        i1 = self._rng1.integers(0, len(self.H1), size=self.batch_size)
        i2 = self._rng2.integers(0, len(self.H2), size=self.batch_size)
        return TrainBatch(
            h1=self.H1[i1], y1=self.y1[i1], h2=self.H2[i2], y2=self.y2[i2]
        )

    def state(self) -> dict:
        return {
            "rng1": self._rng1.bit_generator.state,
            "rng2": self._rng2.bit_generator.state,
        }

    def set_state(self, state: dict) -> None:
        self._rng1.bit_generator.state = state["rng1"]
        self._rng2.bit_generator.state = state["rng2"]


def sample_batches(
    H1: np.ndarray,
    y1: np.ndarray,
    H2: np.ndarray,
    y2: np.ndarray,
    batch_size: int,
    seed: int | np.random.SeedSequence = 0,
) -> Iterator[TrainBatch]:
    sampler = BatchSampler(H1, y1, H2, y2, batch_size, seed)
    while True:
        yield sampler.next_batch()


def avg_cosine_similarity(
    model: AlignmentModel,
    dictionary: KeywordDictionary,
    vocab1: Sequence[ApiKeyword],
    vocab2: Sequence[ApiKeyword],
) -> float:
    """Mean cosine between output-embedding pairs the dictionary maps."""
    pairs = dictionary_pairs(dictionary)
    if not pairs:
        raise EmptyDictionaryError("dictionary induced no keyword pairs")
    idx1 = vocab_index(vocab1)
    idx2 = vocab_index(vocab2)
    E1, E2 = model.output_embeddings
    total = 0.0
    for src_key, tgt_key in pairs:
        a = E1[:, idx1[src_key]].astype(np.float64)
        b = E2[:, idx2[tgt_key]].astype(np.float64)
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        total += float(a @ b / denom) if denom > 0 else 0.0
    return total / len(pairs)


@dataclass
class TrainResult:
    model: AlignmentModel
    opt: Optimizers
    records: list[dict]
    checkpoint_scores: list[tuple[int, float]]
    best_model: AlignmentModel
    best_score: float
    step: int
    sampler_state: dict = field(default_factory=dict)
    dropout_state: dict = field(default_factory=dict)


def train(
    H1: np.ndarray,
    y1: np.ndarray,
    H2: np.ndarray,
    y2: np.ndarray,
    cfg: TrainConfig,
    selector: Callable[[AlignmentModel], float] | None = None,
    on_record: Callable[[dict], None] | None = None,
    resume: "TrainState | None" = None,
    vocab_sizes: tuple[int, int] | None = None,
    stop: Callable[[], bool] | None = None,
) -> TrainResult:
    """Full training loop with checkpoint-time model selection.

    ``selector`` scores a model snapshot (typically average cosine
    similarity of the dictionary it induces); the best-scoring snapshot
    is kept alongside the final model. ``stop`` is polled before each
    step so callers can end training early at a step boundary and still
    get a consistent, resumable result. The loop is single-threaded and
    bit-reproducible for a given config.
    """
    d_b = H1.shape[1]
    if H2.shape[1] != d_b:
        raise DimensionMismatch("both sides must share the provider dimension d_b")
    if vocab_sizes is not None:
        m1, m2 = vocab_sizes
    else:
        m1 = int(y1.max()) + 1 if len(y1) else 0
        m2 = int(y2.max()) + 1 if len(y2) else 0
    if resume is not None:
        model, opt = resume.model, resume.opt
        sampler = BatchSampler(H1, y1, H2, y2, cfg.batch_size, seed=cfg.seed)
        sampler.set_state(resume.sampler_state)
        rng_drop = np.random.default_rng(0)
        rng_drop.bit_generator.state = resume.dropout_state
        start_step = resume.step
    else:
        ss = np.random.SeedSequence(cfg.seed)
        s_batch, s_drop, s_init = ss.spawn(3)
        model = AlignmentModel.create(
            cfg, d_b, [m1, m2], np.random.default_rng(s_init)
        )
        opt = Optimizers.init(model)
        sampler = BatchSampler(H1, y1, H2, y2, cfg.batch_size, seed=s_batch)
        rng_drop = np.random.default_rng(s_drop)
        start_step = 0

    schedule = cfg.schedule
    records: list[dict] = []
    checkpoint_scores: list[tuple[int, float]] = []
    best_model = copy.deepcopy(model)
    best_score = -np.inf

    def checkpoint(step: int) -> None:
        nonlocal best_model, best_score
        if selector is None:
            return
        score = selector(model)
        checkpoint_scores.append((step, score))
        rec = {"step": step, "avg_cos_sim": score}
        records.append(rec)
        if on_record:
            on_record(rec)
        if score > best_score:
            best_score = score
            best_model = copy.deepcopy(model)

    step = start_step
    for next_step in range(start_step + 1, schedule.total_steps + 1):
        if stop is not None and stop():
            break
        step = next_step
        batch = sampler.next_batch()
        lr = schedule.lr_at(step)
        loss_rec = train_step(model, batch, opt, cfg, lr, rng=rng_drop)
        rec = {"step": step, "lr": lr, **loss_rec}
        records.append(rec)
        if on_record:
            on_record(rec)
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            checkpoint(step)
    if (
        not cfg.checkpoint_every
        or step % cfg.checkpoint_every != 0
        or not checkpoint_scores
    ):
        checkpoint(step)
    if selector is None:
        best_model = model
        best_score = float("nan")
    return TrainResult(
        model=model,
        opt=opt,
        records=records,
        checkpoint_scores=checkpoint_scores,
        best_model=best_model,
        best_score=best_score,
        step=step,
        sampler_state=sampler.state(),
        dropout_state=rng_drop.bit_generator.state,
    )


@dataclass
class GridCell:
    peak_lr: float
    batch_size: int
    score: float


@dataclass
class GridResult:
    best_cfg: TrainConfig
    best_model: AlignmentModel
    best_score: float
    cells: list[GridCell]


def grid_search(
    H1: np.ndarray,
    y1: np.ndarray,
    H2: np.ndarray,
    y2: np.ndarray,
    base_cfg: TrainConfig,
    selector: Callable[[AlignmentModel], float],
    lrs: Sequence[float] = LR_GRID,
    batch_sizes: Sequence[int] = BATCH_GRID,
    on_cell: Callable[[GridCell], None] | None = None,
    vocab_sizes: tuple[int, int] | None = None,
) -> GridResult:
    """Train every (lr, N) cell; pick the best unsupervised-criterion score.

    Cells iterate in ascending (lr, N) order and the argmax keeps only
    strictly larger scores, so ties resolve to smaller lr, then smaller N.
    """
    if not lrs or not batch_sizes:
        raise ConfigError("empty hyperparameter grid")
    cells: list[GridCell] = []
    best: tuple[float, TrainConfig, AlignmentModel] | None = None
    for lr in sorted(lrs):
        for n in sorted(batch_sizes):
            cfg = replace(base_cfg, peak_lr=lr, batch_size=n)
            result = train(
                H1, y1, H2, y2, cfg, selector=selector, vocab_sizes=vocab_sizes
            )
            cell = GridCell(peak_lr=lr, batch_size=n, score=result.best_score)
            cells.append(cell)
            if on_cell:
                on_cell(cell)
            if best is None or result.best_score > best[0]:
                best = (result.best_score, cfg, result.best_model)
    assert best is not None
    return GridResult(
        best_cfg=best[1], best_model=best[2], best_score=best[0], cells=cells
    )


@dataclass
class TrainState:
    """Everything needed to continue training from a checkpoint file."""

    model: AlignmentModel
    opt: Optimizers
    sampler_state: dict
    dropout_state: dict
    step: int
    cfg: TrainConfig


def save_checkpoint(
    path: str | Path,
    model: AlignmentModel,
    opt: Optimizers,
    step: int,
    cfg: TrainConfig,
    sampler_state: dict | None = None,
    dropout_state: dict | None = None,
) -> None:
    doc = {
        "version": 1,
        "step": step,
        "config": cfg.to_dict(),
        "model": model.to_dict(),
        "optimizers": opt.to_dict(),
        "sampler_state": sampler_state or {},
        "dropout_state": dropout_state or {},
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path: str | Path) -> TrainState:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != 1:
        raise ConfigError(f"{path}: unsupported checkpoint version")
    return TrainState(
        model=AlignmentModel.from_dict(doc["model"]),
        opt=Optimizers.from_dict(doc["optimizers"]),
        sampler_state=doc["sampler_state"],
        dropout_state=doc["dropout_state"],
        step=int(doc["step"]),
        cfg=TrainConfig.from_dict(doc["config"]),
    )
