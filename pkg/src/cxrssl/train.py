"""Pretraining and linear-evaluation drivers.

``pretrain`` runs the configured framework over an image manifest with the
two-view augmentation pipeline, linear/constant schedules, per-epoch
checkpoints, and line-delimited diagnostics.  ``linear_eval`` freezes a
pretrained encoder bit-exactly (verified by hashing), extracts features
once, grid-searches the linear head's learning rate and weight decay on a
validation split, and reports test metrics -- optionally across k folds
with mean und population-std aggregation.

Determinism contract: given the same seed (and a fixed thread count) the
batch order, augmentation draws, and parameter trajectories are identical,
so diagnostics and reports are byte-identical across runs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .augment import AugmentConfig, make_view_pair, view_rng
from .backbones import BackboneConfig, build_backbone
from .checkpoint import load_checkpoint, method_tensors, restore_method, save_checkpoint
from .data import DatasetManifest, FoldAssignment, load_image, preprocess_eval, split_holdout, split_kfold
from .errors import ArtifactError, ConfigError, NonFiniteLossError, NumericError
from .frameworks import (
    BYOLConfig,
    DINOConfig,
    FRAMEWORKS,
    SimCLRConfig,
    SimSiamConfig,
    build_method,
    train_step,
)
from .metrics import MetricsReport, aggregate_reports, compute_report
from .optim import OPTIMIZERS, build_optimizer
from .schedules import LR_POLICIES, lr_schedule, wd_schedule

FRAMEWORK_CFG_TYPES = {
    "adapted_dino": DINOConfig,
    "simclr": SimCLRConfig,
    "byol": BYOLConfig,
    "simsiam": SimSiamConfig,
}

FRAMEWORK_SECTION = {
    "adapted_dino": "dino",
    "simclr": "simclr",
    "byol": "byol",
    "simsiam": "simsiam",
}


@dataclass(frozen=True)
class PretrainConfig:
    framework: str = "adapted_dino"
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    method: DINOConfig | SimCLRConfig | BYOLConfig | SimSiamConfig = field(default_factory=DINOConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    optimizer: str = "adam"
    base_lr: float = 0.000125
    momentum: float = 0.9
    trust_coefficient: float = 1e-3
    wd_start: float = 1e-7
    wd_end: float = 1e-6
    epochs: int = 100
    batch_size: int = 64
    warmup_epochs: int = 0
    lr_policy: str = "constant"
    seed: int = 0
    checkpoint_every: int = 1
    keep_checkpoints: int = 2
    cache_images: bool = True

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f"unknown framework {self.framework!r}")
        if not isinstance(self.method, FRAMEWORK_CFG_TYPES[self.framework]):
            raise ConfigError(
                f"{self.framework} needs a {FRAMEWORK_CFG_TYPES[self.framework].__name__}, "
                f"got {type(self.method).__name__}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_policy not in LR_POLICIES:
            raise ConfigError(f"unknown lr policy {self.lr_policy!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        min_batch = 2  # contrastive negatives and batch statistics need pairs
        if self.batch_size < min_batch:
            raise ConfigError(f"batch_size must be >= {min_batch}")
        if self.wd_start > self.wd_end:
            raise ConfigError(f"wd_start {self.wd_start} > wd_end {self.wd_end}")
        if self.augment.out_size != self.backbone.image_size:
            raise ConfigError(
                f"augment out_size {self.augment.out_size} != backbone image_size "
                f"{self.backbone.image_size}"
            )

    def to_flat(self) -> dict:
        """Dotted-key echo of every field; the canonical config identity."""
        flat: dict = {"framework": self.framework, "seed": self.seed}
        for key, value in dataclasses.asdict(self.backbone).items():
            flat[f"backbone.{key}"] = _plain(value)
        section = FRAMEWORK_SECTION[self.framework]
        for key, value in dataclasses.asdict(self.method).items():
            flat[f"{section}.{key}"] = _plain(value)
        for key, value in dataclasses.asdict(self.augment).items():
            flat[f"augment.{key}"] = _plain(value)
        for key in ("optimizer", "base_lr", "momentum", "trust_coefficient", "wd_start",
                    "wd_end", "epochs", "batch_size", "warmup_epochs", "lr_policy",
                    "checkpoint_every", "keep_checkpoints", "cache_images"):
            flat[f"train.{key}"] = _plain(getattr(self, key))
        return flat


@dataclass(frozen=True)
class LinearEvalConfig:
    lr_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    wd_grid: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    epochs: int = 50
    warmup_epochs: int = 10
    momentum: float = 0.9
    batch_size: int = 256
    train_frac: float = 0.81
    val_frac: float = 0.09
    resize_to: int | None = None
    feature_batch: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.lr_grid or not self.wd_grid:
            raise ConfigError("learning-rate and weight-decay grids must be non-empty")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError(f"warmup_epochs {self.warmup_epochs} must be < epochs {self.epochs}")

    def to_flat(self) -> dict:
        return {f"eval.{key}": _plain(value) for key, value in dataclasses.asdict(self).items()}


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


# ----------------------------------------------------------------- pretrain


class _ImageStore:
    """Decoded-image access with optional in-memory caching (desk scale)."""

    def __init__(self, manifest: DatasetManifest, channels: int, cache: bool):
        self.manifest = manifest
        self.channels = channels
        self.cache: dict[int, np.ndarray] | None = {} if cache else None

    def __getitem__(self, index: int) -> np.ndarray:
        if self.cache is not None and index in self.cache:
            return self.cache[index]
        rec = self.manifest.records[index]
        img = load_image(self.manifest.root / rec.path, channels=self.channels)
        if self.cache is not None:
            self.cache[index] = img
        return img


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence((seed, epoch, 0xBA7C4)))
    return rng.permutation(n)


def _write_diagnostic(fh, record: dict):
    fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()


def pretrain(cfg: PretrainConfig, manifest: DatasetManifest, run_dir: str | Path,
             resume: str | Path | None = None) -> Path:
    """Run self-supervised pretraining; returns the final checkpoint path.

    Writes ``diagnostics.jsonl`` (one record per optimizer step), periodic
    per-epoch checkpoints under ``checkpoints/``, and ``final.ckpt``.
    Aborts with :class:`NumericError` after three consecutive non-finite
    losses.
    """
    if len(manifest) == 0:
        raise ConfigError("manifest has no records")
    if len(manifest) < cfg.batch_size:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {len(manifest)}")
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    torch.manual_seed(cfg.seed)
    method = build_method(cfg.framework, cfg.backbone, cfg.method)
    optimizer = build_optimizer(cfg.optimizer, method, cfg.base_lr,
                                momentum=cfg.momentum,
                                trust_coefficient=cfg.trust_coefficient)
    echo = cfg.to_flat()

    steps_per_epoch = len(manifest) // cfg.batch_size
    if steps_per_epoch == 0:
        raise ConfigError("not enough records for a single batch")
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = cfg.warmup_epochs * steps_per_epoch

    epochs_done = 0
    global_step = 0
    if resume is not None:
        tensors, meta = load_checkpoint(resume)
        if meta.get("config") != _jsonround(echo):
            raise ArtifactError("checkpoint config echo does not match the current config; "
                                "refusing to resume")
        restore_method(method, tensors, optimizer)
        epochs_done = int(meta["epochs_done"])
        global_step = int(meta["step"])

    store = _ImageStore(manifest, cfg.backbone.in_channels, cfg.cache_images)
    diag_path = run_dir / "diagnostics.jsonl"
    mode = "a" if resume is not None else "w"
    consecutive_failures = 0
    periodic: list[Path] = sorted((run_dir / "checkpoints").glob("epoch_*.ckpt"))

    with open(diag_path, mode) as diag:
        for epoch in range(epochs_done, cfg.epochs):
            order = _epoch_order(cfg.seed, epoch, len(manifest))
            for b in range(steps_per_epoch):
                batch = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                v1 = np.stack([_view_pair(store, int(i), cfg, epoch)[0] for i in batch])
                v2 = np.stack([_view_pair(store, int(i), cfg, epoch)[1] for i in batch])
                lr = lr_schedule(global_step, total_steps, cfg.base_lr, warmup_steps, cfg.lr_policy)
                wd = wd_schedule(global_step, total_steps, cfg.wd_start, cfg.wd_end)
                try:
                    out = train_step(method, optimizer,
                                     (torch.from_numpy(v1), torch.from_numpy(v2)),
                                     lr=lr, weight_decay=wd)
                except NonFiniteLossError as exc:
                    consecutive_failures += 1
                    _write_diagnostic(diag, {"epoch": epoch, "step": global_step,
                                             "event": "nonfinite_loss_skipped"})
                    if consecutive_failures >= 3:
                        raise NumericError(
                            f"aborting: {consecutive_failures} consecutive non-finite losses "
                            f"at step {global_step}") from exc
                    continue
                consecutive_failures = 0
                record = {
                    "epoch": epoch,
                    "step": global_step,
                    "loss": out.loss,
                    "teacher_entropy": out.diagnostics.get("teacher_entropy"),
                    "learning_rate": lr,
                    "weight_decay": wd,
                }
                _write_diagnostic(diag, record)
                global_step += 1
            epochs_done = epoch + 1
            if epochs_done % cfg.checkpoint_every == 0 and epochs_done < cfg.epochs:
                path = run_dir / "checkpoints" / f"epoch_{epochs_done:04d}.ckpt"
                _save(path, method, optimizer, echo, epochs_done, global_step)
                periodic.append(path)
                while len(periodic) > cfg.keep_checkpoints:
                    periodic.pop(0).unlink(missing_ok=True)

    final = run_dir / "final.ckpt"
    _save(final, method, optimizer, echo, epochs_done, global_step)
    return final


def _view_pair(store: _ImageStore, index: int, cfg: PretrainConfig, epoch: int):
    rng = view_rng(cfg.seed, index, epoch)
    pair = make_view_pair(store[index], rng, cfg.augment)
    return pair.view1, pair.view2


def _jsonround(obj):
    return json.loads(json.dumps(obj))


def _save(path: Path, method, optimizer, echo: dict, epochs_done: int, step: int):
    meta = {"config": echo, "epochs_done": epochs_done, "step": step,
            "framework": echo["framework"]}
    save_checkpoint(path, method_tensors(method, optimizer), meta)


# -------------------------------------------------------------- linear eval


def params_hash(module: nn.Module) -> str:
    """SHA-256 over name-sorted parameter bytes; detects any drift."""
    digest = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        digest.update(name.encode())
        digest.update(p.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def backbone_from_checkpoint(path: str | Path) -> tuple[nn.Module, BackboneConfig, dict]:
    """Rebuild the student encoder recorded in a checkpoint, frozen."""
    tensors, meta = load_checkpoint(path)
    flat = meta.get("config")
    if not isinstance(flat, dict):
        raise ArtifactError(f"{path}: checkpoint carries no config echo")
    bcfg = backbone_config_from_flat(flat)
    encoder = build_backbone(bcfg)
    prefix = "student.encoder."
    state = {k[len(prefix):]: torch.from_numpy(v) for k, v in tensors.items()
             if k.startswith(prefix)}
    if not state:
        raise ArtifactError(f"{path}: no student encoder parameters found")
    encoder.load_state_dict(state, strict=True)
    encoder.eval()
    for p in encoder.parameters():
        p.requires_grad_(False)
    return encoder, bcfg, meta


def backbone_config_from_flat(flat: dict) -> BackboneConfig:
    kwargs = {}
    for key, value in flat.items():
        if key.startswith("backbone."):
            name = key.split(".", 1)[1]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
    if not kwargs:
        raise ArtifactError("config echo has no backbone.* keys")
    return BackboneConfig(**kwargs)


def extract_features(encoder: nn.Module, cfg: BackboneConfig, manifest: DatasetManifest,
                     indices: list[int], resize_to: int | None = None,
                     batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Frozen-encoder embeddings for the given records (single pass)."""
    if resize_to is None:
        resize_to = max(cfg.image_size, int(round(cfg.image_size * 256 / 224)))
    encoder.eval()
    labels = manifest.labels()
    feats = []
    with torch.no_grad():
        for start in range(0, len(indices), batch_size):
            chunk = indices[start:start + batch_size]
            imgs = []
            for i in chunk:
                raw = load_image(manifest.root / manifest.records[i].path, channels=cfg.in_channels)
                imgs.append(preprocess_eval(raw, resize_to=resize_to, crop_to=cfg.image_size))
            batch = torch.from_numpy(np.stack(imgs))
            feats.append(encoder(batch).cpu().numpy())
    features = np.concatenate(feats, axis=0) if feats else np.zeros((0, encoder.embed_dim), np.float32)
    return features.astype(np.float32), labels[indices]


def train_linear_head(train_x: np.ndarray, train_y: np.ndarray, n_classes: int,
                      lr: float, weight_decay: float, epochs: int, warmup_epochs: int,
                      momentum: float, batch_size: int, seed: int) -> nn.Linear:
    """SGD-with-momentum training of a single linear layer on frozen
    features, with the linear warmup schedule."""
    torch.manual_seed(seed)
    head = nn.Linear(train_x.shape[1], n_classes)
    nn.init.zeros_(head.bias)
    nn.init.trunc_normal_(head.weight, std=0.01)
    opt = torch.optim.SGD(head.parameters(), lr=lr, momentum=momentum,
                          weight_decay=weight_decay)
    x = torch.from_numpy(train_x)
    y = torch.from_numpy(train_y.astype(np.int64))
    n = x.shape[0]
    bs = min(batch_size, n)
    steps_per_epoch = max(n // bs, 1)
    total = epochs * steps_per_epoch
    warmup = warmup_epochs * steps_per_epoch
    criterion = nn.CrossEntropyLoss()
    step = 0
    for epoch in range(epochs):
        order = _epoch_order(seed, epoch, n)
        for b in range(steps_per_epoch):
            idx = torch.from_numpy(order[b * bs:(b + 1) * bs].copy())
            for group in opt.param_groups:
                group["lr"] = lr_schedule(step, total, lr, warmup)
            opt.zero_grad()
            loss = criterion(head(x[idx]), y[idx])
            loss.backward()
            opt.step()
            step += 1
    return head


def head_scores(head: nn.Linear, x: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        return head(torch.from_numpy(x)).numpy().astype(np.float64)


def grid_search(driver, lr_grid, wd_grid) -> tuple[tuple[float, float], dict]:
    """Evaluate ``driver(lr, wd) -> score`` on every grid cell; ties resolve
    to the higher learning rate, then the lower weight decay."""
    if not lr_grid or not wd_grid:
        raise ConfigError("grids must be non-empty")
    scores: dict[tuple[float, float], float] = {}
    for lr in lr_grid:
        for wd in wd_grid:
            scores[(lr, wd)] = float(driver(lr, wd))
    best = max(scores, key=lambda cell: (scores[cell], cell[0], -cell[1]))
    return best, scores


@dataclass
class LinearEvalResult:
    report: MetricsReport
    best_lr: float
    best_wd: float
    grid_scores: dict
    backbone_hash: str
    fold_reports: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "report": self.report.to_json_dict(),
            "best_lr": self.best_lr,
            "best_wd": self.best_wd,
            "grid_scores": {f"{lr:g}/{wd:g}": s for (lr, wd), s in sorted(self.grid_scores.items())},
            "backbone_hash": self.backbone_hash,
            "fold_reports": [r.to_json_dict() for r in self.fold_reports],
        }


def _eval_on_split(features, labels, idx_train, idx_val, idx_test, n_classes,
                   cfg: LinearEvalConfig, class_names) -> tuple[MetricsReport, float, float, dict]:
    tr_x, tr_y = features[idx_train], labels[idx_train]
    va_x, va_y = features[idx_val], labels[idx_val]
    te_x, te_y = features[idx_test], labels[idx_test]

    def driver(lr, wd):
        head = train_linear_head(tr_x, tr_y, n_classes, lr, wd, cfg.epochs,
                                 cfg.warmup_epochs, cfg.momentum, cfg.batch_size, cfg.seed)
        from .metrics import accuracy
        return accuracy(head_scores(head, va_x), va_y)

    (best_lr, best_wd), scores = grid_search(driver, cfg.lr_grid, cfg.wd_grid)
    head = train_linear_head(tr_x, tr_y, n_classes, best_lr, best_wd, cfg.epochs,
                             cfg.warmup_epochs, cfg.momentum, cfg.batch_size, cfg.seed)
    report = compute_report(head_scores(head, te_x), te_y, class_names=class_names)
    return report, best_lr, best_wd, scores


def _carve_val(manifest: DatasetManifest, indices: list[int], val_frac: float,
               seed: int) -> tuple[list[int], list[int]]:
    """Stratified validation carve-out from a pool of labeled indices."""
    sub_records = [manifest.records[i] for i in indices]
    sub = DatasetManifest(sub_records, list(manifest.class_names), manifest.root)
    train_frac = 1.0 - val_frac - 1e-9
    tagged = split_holdout(sub, train_frac=train_frac - val_frac, val_frac=val_frac, seed=seed)
    train_idx = [indices[j] for j, r in enumerate(tagged.records) if r.split != "val"]
    val_idx = [indices[j] for j, r in enumerate(tagged.records) if r.split == "val"]
    return train_idx, val_idx


def linear_eval(checkpoint_path: str | Path, manifest: DatasetManifest,
                cfg: LinearEvalConfig, folds: int | None = None) -> LinearEvalResult:
    """Linear probe on a frozen pretrained encoder.

    Without ``folds`` the manifest's train/val/test splits are used (an
    unsplit manifest gets the 81/9/10 holdout protocol applied with the
    eval seed).  With ``folds=k`` a stratified k-fold rotation is run and
    the per-metric mean and population std reported.
    """
    labeled = [i for i, r in enumerate(manifest.records) if r.label is not None]
    if not labeled:
        raise ConfigError("linear evaluation needs labeled records")
    n_classes = len(manifest.class_names)
    if n_classes < 2:
        raise ConfigError("need at least two classes")

    encoder, bcfg, _ = backbone_from_checkpoint(checkpoint_path)
    hash_before = params_hash(encoder)
    features_all, labels_all = extract_features(encoder, bcfg, manifest,
                                                list(range(len(manifest))),
                                                resize_to=cfg.resize_to,
                                                batch_size=cfg.feature_batch)
    class_names = list(manifest.class_names)

    if folds is None:
        work = manifest
        if not work.indices("test"):
            work = split_holdout(work, cfg.train_frac, cfg.val_frac, seed=cfg.seed)
        idx_train = [i for i in work.indices("train") if work.records[i].label is not None]
        idx_val = [i for i in work.indices("val") if work.records[i].label is not None]
        idx_test = [i for i in work.indices("test") if work.records[i].label is not None]
        if not idx_train or not idx_val or not idx_test:
            raise ConfigError("train/val/test splits must all contain labeled records")
        report, best_lr, best_wd, scores = _eval_on_split(
            features_all, labels_all, idx_train, idx_val, idx_test, n_classes, cfg, class_names)
        fold_reports = []
    else:
        sub_records = [manifest.records[i] for i in labeled]
        sub = DatasetManifest(sub_records, class_names, manifest.root)
        assignment = split_kfold(sub, folds, seed=cfg.seed)
        fold_reports = []
        picked = []
        for fold in range(folds):
            idx_test = [labeled[j] for j in assignment.fold_indices(fold)]
            pool = [labeled[j] for j in range(len(labeled)) if assignment.fold_of[j] != fold]
            idx_train, idx_val = _carve_val(manifest, pool, cfg.val_frac, cfg.seed + fold)
            rep, blr, bwd, scores = _eval_on_split(
                features_all, labels_all, idx_train, idx_val, idx_test, n_classes, cfg, class_names)
            fold_reports.append(rep)
            picked.append((blr, bwd, scores))
        report = aggregate_reports(fold_reports)
        best_lr, best_wd, scores = picked[-1]

    hash_after = params_hash(encoder)
    if hash_before != hash_after:
        raise NumericError("frozen backbone drifted during linear evaluation")
    return LinearEvalResult(report=report, best_lr=best_lr, best_wd=best_wd,
                            grid_scores=scores, backbone_hash=hash_after,
                            fold_reports=fold_reports)
