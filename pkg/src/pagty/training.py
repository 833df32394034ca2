"""Training loop, evaluation runner, single-image prediction and the
branch-ablation driver.

Reproducibility contract: with a fixed seed and the thread-pool loader the
whole history is a pure function of (seed, configs, data).  Batch order is
drawn from a per-epoch seeded generator and every sample's augmentation
stream is seeded by (seed, epoch, sample index), so the number of loader
workers cannot change results.
"""

import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, capture_rng_state, load_checkpoint, save_checkpoint
from .data import AugmentationPolicy, SampleRecord, augment, load_image, load_mask, per_sample_rng, save_mask
from .errors import ConfigError, DataError, NumericError
from .metrics import MaskBatch, MetricsReport, evaluate_masks, report_to_csv, report_to_text
from .model import ModelConfig, PagTransYnet, build_model, compute_loss

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam",)
LR_SCHEDULES = ("constant", "cosine")

# fixed overlay palette: background transparent, classes cycle through these
PALETTE = [
    (230, 60, 60), (60, 180, 75), (65, 105, 225), (255, 200, 40),
    (170, 60, 220), (60, 220, 220), (245, 130, 48), (240, 120, 180),
]


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.1
    optimizer: str = "adam"
    batch_size: int = 16
    seed: int = 0
    device: str = "cpu"
    eval_every: int = 1
    workers: int = 0
    lr_schedule: str = "constant"
    ce_weight: float = 1.0
    dice_weight: float = 1.0
    augmentation: AugmentationPolicy = field(default_factory=AugmentationPolicy)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr: must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer: {self.optimizer!r} not in {OPTIMIZERS}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule: {self.lr_schedule!r} not in {LR_SCHEDULES}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every: must be >= 1, got {self.eval_every}")
        if self.workers < 0:
            raise ConfigError(f"workers: must be >= 0, got {self.workers}")
        if isinstance(self.augmentation, dict):
            policy = dict(self.augmentation)
            if "angle_range" in policy:
                policy["angle_range"] = tuple(policy["angle_range"])
            self.augmentation = AugmentationPolicy(**policy)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


def resolve_device(config: TrainConfig | None = None) -> str:
    env = os.environ.get("PAGTY_DEVICE")
    if env:
        return env
    return config.device if config is not None else "cpu"


def _fit_to_size(image: np.ndarray, mask: np.ndarray | None, size: tuple[int, int]):
    """Resize a [C,H,W] image (bilinear) and its mask (nearest) to ``size``."""
    if image.shape[-2:] == size:
        return image, mask
    t = torch.from_numpy(image[None].astype(np.float32))
    image = torch.nn.functional.interpolate(
        t, size=size, mode="bilinear", align_corners=False
    )[0].numpy()
    if mask is not None:
        m = torch.from_numpy(mask[None, None].astype(np.float32))
        mask = torch.nn.functional.interpolate(m, size=size, mode="nearest")[0, 0]
        mask = mask.numpy().astype(np.int64)
    return image, mask


def compute_norm_stats(records, channels: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-channel mean/std over a record list, in [0,1] intensity units."""
    total = np.zeros(channels)
    total_sq = np.zeros(channels)
    count = 0
    for rec in records:
        img = load_image(rec.image_path, channels)
        total += img.reshape(channels, -1).sum(axis=1)
        total_sq += (img.reshape(channels, -1) ** 2).sum(axis=1)
        count += img.shape[1] * img.shape[2]
    mean = total / count
    std = np.sqrt(np.maximum(total_sq / count - mean**2, 1e-12))
    return tuple(float(v) for v in mean), tuple(float(v) for v in std)


class SampleLoader:
    """Loads, resizes, optionally augments and normalizes one record."""

    def __init__(self, model_config: ModelConfig, policy: AugmentationPolicy | None, seed: int):
        self.config = model_config
        self.policy = policy
        self.seed = seed
        mean = model_config.norm_mean or (0.0,) * model_config.in_channels
        std = model_config.norm_std or (1.0,) * model_config.in_channels
        self.mean = np.asarray(mean, dtype=np.float32)[:, None, None]
        self.std = np.asarray(std, dtype=np.float32)[:, None, None]

    def __call__(self, record: SampleRecord, epoch: int, index: int):
        image = load_image(record.image_path, self.config.in_channels)
        mask = load_mask(record.mask_path)
        if mask.shape != image.shape[-2:]:
            raise DataError(
                f"{record.image_path.name}: image {image.shape[-2:]} and mask "
                f"{mask.shape} sizes differ"
            )
        image, mask = _fit_to_size(image, mask, tuple(self.config.input_size))
        if self.policy is not None:
            image, mask = augment(image, mask, self.policy, per_sample_rng(self.seed, epoch, index))
        if mask.max() >= self.config.num_classes:
            raise DataError(
                f"{record.mask_path.name}: mask id {int(mask.max())} out of range "
                f"for {self.config.num_classes} classes"
            )
        image = (image.astype(np.float32) - self.mean) / self.std
        return image, mask.astype(np.int64)


def _load_batch(loader, records, indices, epoch, workers):
    jobs = [(records[j], epoch, int(j)) for j in indices]
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(lambda args: loader(*args), jobs))
    else:
        pairs = [loader(*args) for args in jobs]
    images = torch.from_numpy(np.stack([p[0] for p in pairs]))
    masks = torch.from_numpy(np.stack([p[1] for p in pairs]))
    return images, masks


@dataclass
class TrainResult:
    history: list[dict]
    best_checkpoint: Path
    last_checkpoint: Path
    best_val_dsc: float
    model: PagTransYnet


def _predict_masks(model, loader, records, device, batch_size=8) -> np.ndarray:
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            chunk = records[start : start + batch_size]
            images, _ = _load_batch(loader, chunk, range(len(chunk)), 0, 0)
            logits = model(images.to(device))
            out.append(logits.argmax(dim=1).cpu().numpy())
    return np.concatenate(out)


def _gt_masks(loader, records) -> np.ndarray:
    masks = []
    for rec in records:
        image = load_image(rec.image_path, loader.config.in_channels)
        mask = load_mask(rec.mask_path)
        _, mask = _fit_to_size(image, mask, tuple(loader.config.input_size))
        masks.append(mask)
    return np.stack(masks)


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_records: list[SampleRecord],
    val_records: list[SampleRecord] | None = None,
    out_dir="runs",
) -> TrainResult:
    """Run the optimization loop and save best/last checkpoints.

    Validation uses ``val_records`` when given, otherwise the training set.
    The best checkpoint is the one with the highest mean foreground Dice
    seen at any validation point.
    """
    if not train_records:
        raise DataError("training set is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    device = resolve_device(train_config)

    torch.manual_seed(train_config.seed)
    model_config = dataclasses.replace(model_config)
    if model_config.norm_mean is None or model_config.norm_std is None:
        mean, std = compute_norm_stats(train_records, model_config.in_channels)
        model_config.norm_mean, model_config.norm_std = mean, std
    model = build_model(model_config).to(device)

    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.lr)
    scheduler = None
    if train_config.lr_schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=train_config.epochs
        )

    train_loader = SampleLoader(model_config, train_config.augmentation, train_config.seed)
    eval_loader = SampleLoader(model_config, None, train_config.seed)
    eval_records = val_records if val_records else train_records
    eval_gts = MaskBatch(_gt_masks(eval_loader, eval_records), model_config.num_classes)

    best_path = out / "best.ckpt"
    last_path = out / "last.ckpt"
    history: list[dict] = []
    best_dsc = -1.0
    n = len(train_records)

    for epoch in range(train_config.epochs):
        model.train()
        order = np.random.default_rng([train_config.seed, 1 + epoch]).permutation(n)
        losses = []
        for batch_idx, start in enumerate(range(0, n, train_config.batch_size)):
            indices = order[start : start + train_config.batch_size]
            images, masks = _load_batch(
                train_loader, train_records, indices, epoch, train_config.workers
            )
            optimizer.zero_grad()
            logits = model(images.to(device))
            loss = compute_loss(
                logits, masks.to(device), train_config.ce_weight, train_config.dice_weight
            )
            value = float(loss.detach())
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {batch_idx} "
                    f"(lr={optimizer.param_groups[0]['lr']:g})"
                )
            loss.backward()
            optimizer.step()
            losses.append(value)
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "lr": float(optimizer.param_groups[0]["lr"]),
        }
        if scheduler is not None:
            scheduler.step()

        is_last = epoch == train_config.epochs - 1
        if epoch % train_config.eval_every == 0 or is_last:
            preds = _predict_masks(model, eval_loader, eval_records, device)
            report = evaluate_masks(
                MaskBatch(preds, model_config.num_classes), eval_gts
            )
            record["val_dsc"] = report.mean_dsc
            if report.mean_dsc > best_dsc:
                best_dsc = report.mean_dsc
                save_checkpoint(best_path, model, optimizer, epoch, capture_rng_state())
        history.append(record)
        logger.info(
            "epoch %d loss %.4f%s", epoch, record["train_loss"],
            f" val_dsc {record['val_dsc']:.4f}" if "val_dsc" in record else "",
        )

    save_checkpoint(last_path, model, optimizer, train_config.epochs - 1, capture_rng_state())
    return TrainResult(
        history=history,
        best_checkpoint=best_path,
        last_checkpoint=last_path,
        best_val_dsc=best_dsc,
        model=model,
    )


def _ensure_model(checkpoint) -> tuple[PagTransYnet, ModelConfig]:
    if isinstance(checkpoint, PagTransYnet):
        return checkpoint, checkpoint.config
    if isinstance(checkpoint, (str, Path)):
        checkpoint = load_checkpoint(checkpoint)
    if isinstance(checkpoint, Checkpoint):
        return checkpoint.build(), checkpoint.config
    raise ConfigError(f"cannot evaluate a {type(checkpoint).__name__}")


def evaluate(
    checkpoint,
    records: list[SampleRecord],
    scheme: str = "mean_per_image",
    out_dir=None,
    predict_fn=None,
    device: str | None = None,
) -> MetricsReport:
    """Deterministic inference + metrics; optionally writes CSV/text reports.

    ``predict_fn``, when given, replaces model inference: it receives the
    record list and must return an integer mask array [N, H, W].  ``scheme``
    names the aggregation context this report will enter; combining reports
    across folds/runs is ``metrics.aggregate``'s job.
    """
    from .metrics import AGGREGATION_SCHEMES

    if not records:
        raise DataError("evaluation set is empty")
    if scheme not in AGGREGATION_SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}, expected one of {AGGREGATION_SCHEMES}")
    model, config = _ensure_model(checkpoint)
    device = device or resolve_device()
    model.to(device)
    loader = SampleLoader(config, None, 0)
    gts = MaskBatch(_gt_masks(loader, records), config.num_classes)
    if predict_fn is not None:
        preds = np.asarray(predict_fn(records))
    else:
        preds = _predict_masks(model, loader, records, device)
    report = evaluate_masks(MaskBatch(preds, config.num_classes), gts)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(report_to_csv(report))
        (out / "metrics.txt").write_text(report_to_text(report))
    return report


def predict(checkpoint, image_path, out_dir, device: str | None = None) -> tuple[Path, Path]:
    """Segment one image; writes ``<stem>_mask.png`` and ``<stem>_overlay.png``.

    Images smaller than the model's input size are zero-padded on the
    bottom/right and the prediction is cropped back.
    """
    from PIL import Image

    model, config = _ensure_model(checkpoint)
    device = device or resolve_device()
    model.to(device).eval()
    image = load_image(image_path, config.in_channels)
    h, w = image.shape[-2:]
    th, tw = config.input_size
    if h > th or w > tw:
        raise DataError(
            f"image {h}x{w} exceeds the model input {th}x{tw}; resize it or "
            "build a larger-input model"
        )
    if (h, w) != (th, tw):
        logger.warning("padding %dx%d input to %dx%d for inference", h, w, th, tw)
        padded = np.zeros((image.shape[0], th, tw), dtype=np.float32)
        padded[:, :h, :w] = image
        image = padded

    mean = np.asarray(config.norm_mean or (0.0,) * config.in_channels, dtype=np.float32)
    std = np.asarray(config.norm_std or (1.0,) * config.in_channels, dtype=np.float32)
    tensor = torch.from_numpy(
        (image - mean[:, None, None]) / std[:, None, None]
    )[None].to(device)
    with torch.no_grad():
        mask = model(tensor).argmax(dim=1)[0].cpu().numpy()
    mask = mask[:h, :w]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(image_path).stem
    mask_path = out / f"{stem}_mask.png"
    overlay_path = out / f"{stem}_overlay.png"
    save_mask(mask_path, mask)

    base = (image[:, :h, :w].mean(axis=0) * 255).clip(0, 255).astype(np.uint8)
    overlay = np.stack([base] * 3, axis=-1).astype(np.float32)
    for cls in range(1, config.num_classes):
        color = np.asarray(PALETTE[(cls - 1) % len(PALETTE)], dtype=np.float32)
        hit = mask == cls
        overlay[hit] = 0.5 * overlay[hit] + 0.5 * color
    Image.fromarray(overlay.round().astype(np.uint8), mode="RGB").save(overlay_path)
    return mask_path, overlay_path


ABLATION_ROWS = (
    ("(1) No Pyramid Path", {"pyr": False, "pvt": True, "vit": True}),
    ("(2) No PVT", {"pyr": True, "pvt": False, "vit": True}),
    ("(3) No ViT", {"pyr": True, "pvt": True, "vit": False}),
    ("(4) PAG-TransYnet", {"pyr": True, "pvt": True, "vit": True}),
)


def run_ablation(
    base_config: ModelConfig,
    train_config: TrainConfig,
    train_records: list[SampleRecord],
    val_records: list[SampleRecord] | None = None,
    out_dir="ablation",
) -> list[dict]:
    """Train and evaluate the four branch-toggle rows under one seed.

    Returns one dict per row: label, flags, parameter count, mean DSC/HD95
    (and mean F1 for multi-class tasks); also writes ablation.csv/txt.
    """
    from .model import AblationFlags

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, flag_values in ABLATION_ROWS:
        config = dataclasses.replace(base_config, flags=AblationFlags(**flag_values))
        result = train(
            config, train_config, train_records, val_records,
            out_dir=out / label.split(")")[0].strip("( "),
        )
        report = evaluate(result.model, val_records or train_records)
        rows.append(
            {
                "label": label,
                "flags": flag_values,
                "params": result.model.param_count(),
                "dsc": report.mean_dsc,
                "hd95": report.mean_hd95,
                "f1": report.mean_f1,
            }
        )

    multiclass = base_config.num_classes > 2
    header = ["row", "pyr", "pvt", "vit", "params", "dsc", "hd95"] + (["f1"] if multiclass else [])
    lines = [",".join(header)]
    for row in rows:
        cells = [
            row["label"],
            *("yes" if row["flags"][k] else "no" for k in ("pyr", "pvt", "vit")),
            str(row["params"]),
            f"{row['dsc']:.6f}",
            f"{row['hd95']:.6f}",
        ]
        if multiclass:
            cells.append(f"{row['f1']:.6f}")
        lines.append(",".join(cells))
    csv_text = "\n".join(lines) + "\n"
    (out / "ablation.csv").write_text(csv_text)
    (out / "ablation.txt").write_text(csv_text.replace(",", "\t"))
    return rows
