"""Config-driven training loop, checkpointing, and evaluation.

The experiment config is one YAML file covering data paths, every module's
hyperparameters, the optimizer, and the ablation switches. Checkpoints are
a versioned binary container (json header + raw little-endian tensors)
written deterministically: identical runs produce identical bytes, which
the test suite checks directly.

Determinism: with deterministic=True the run is single-threaded, torch is
switched to deterministic algorithms, and all shuffling comes from one
seeded generator, so losses, checkpoints, and reports are bit-reproducible.
"""

import hashlib
import json
import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import dataset
from .geodesics import GeodesicIndex
from .geometry import PointPyramid, build_pyramid
from .losses import LossConfig, contact_loss_with_logits, part_loss, total_loss
from .metrics import MetricsReport, report_csv, report_text, score_sample
from .model import ContactNet, ModelConfig
from .types import ContactSample, ImageInput, MeshTopology, normalize_cloud

CHECKPOINT_MAGIC = b"GRCK"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, batch_ids: list[str], dump_path: Optional[Path]):
        super().__init__(
            f"non-finite loss at step {step} (batch {batch_ids}); "
            f"diagnostics at {dump_path}"
        )
        self.step = step
        self.batch_ids = batch_ids
        self.dump_path = dump_path


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0
    schedule: str = "cosine"  # "cosine" | "constant"
    min_lr_fraction: float = 0.0  # optional cosine floor, as a fraction of lr


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: str = ""
    out_dir: str = "runs/default"
    train_split: str = "train"
    eval_split: str = "test"
    batch_size: int = 4
    epochs: int = 10
    max_steps: Optional[int] = None
    seed: int = 0
    deterministic: bool = True
    log_every: int = 10
    checkpoint_every: Optional[int] = None
    # ablation switches
    disable_part_branch: bool = False
    disable_global_branch: bool = False
    loss_variant: str = "combined"
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def model_config(self) -> ModelConfig:
        return self.model.ablated(self.disable_part_branch, self.disable_global_branch)

    def loss_config(self) -> LossConfig:
        return replace(self.loss, variant=self.loss_variant)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model", {}))
        loss = LossConfig(**d.pop("loss", {}))
        opt = OptimizerConfig(**d.pop("optimizer", {}))
        return ExperimentConfig(model=model, loss=loss, optimizer=opt, **d)

    @staticmethod
    def from_yaml(path: Path) -> "ExperimentConfig":
        import yaml
        with open(path) as fh:
            return ExperimentConfig.from_dict(yaml.safe_load(fh) or {})

    def to_yaml(self, path: Path) -> None:
        import yaml
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))


def _identity_dict(cfg: ExperimentConfig) -> dict:
    """Config dict with run bookkeeping (out_dir) normalized away, so the
    same experiment checkpointed into two directories is byte-identical."""
    d = cfg.to_dict()
    d["out_dir"] = ""
    return d


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(
        json.dumps(_identity_dict(cfg), sort_keys=True).encode()
    ).hexdigest()


def setup_determinism(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


# ---------------------------------------------------------------------------
# checkpoint container

def save_checkpoint(path: Path, cfg: ExperimentConfig, model: ContactNet) -> Path:
    """Versioned binary: magic, version, json header, raw tensor bytes.

    Tensors are written in sorted state-dict-key order as little-endian
    float32/int64, so two identical models serialize to identical bytes.
    """
    state = model.state_dict()
    names = sorted(state.keys())
    arrays = []
    payload = bytearray()
    for name in names:
        tensor = state[name].detach().cpu()
        arr = np.ascontiguousarray(tensor.numpy(), dtype=tensor.numpy().dtype.newbyteorder("<"))
        arrays.append({"name": name, "dtype": str(arr.dtype),
                       "shape": list(tensor.shape)})
        payload += arr.tobytes()
    header = json.dumps({
        "config_hash": config_hash(cfg),
        "experiment_config": _identity_dict(cfg),
        "arrays": arrays,
    }, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        fh.write(bytes(payload))
    return path


def load_checkpoint(path: Path) -> tuple[ExperimentConfig, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, header_len = struct.unpack("<IQ", fh.read(12))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len))
        state = {}
        for spec in header["arrays"]:
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            dtype = np.dtype(spec["dtype"])
            buf = fh.read(count * dtype.itemsize)
            arr = np.frombuffer(buf, dtype=dtype).reshape(spec["shape"]).copy()
            state[spec["name"]] = torch.from_numpy(arr)
    cfg = ExperimentConfig.from_dict(header["experiment_config"])
    if header["config_hash"] != config_hash(cfg):
        raise ValueError(f"{path}: embedded config hash mismatch")
    return cfg, state


def load_model(path: Path) -> tuple[ContactNet, ExperimentConfig]:
    cfg, state = load_checkpoint(path)
    model = ContactNet(cfg.model_config())
    model.load_state_dict(state)
    model.eval()
    return model, cfg


# ---------------------------------------------------------------------------
# sample preparation

@dataclass
class PreparedSample:
    sample_id: str
    image: torch.Tensor        # [3, H, W] standardized
    contact: torch.Tensor      # [N] float32
    part_mask: torch.Tensor    # [H, W] long
    pyramid: PointPyramid
    points: np.ndarray         # raw meters, for geodesic scoring
    faces: Optional[np.ndarray]


def prepare_samples(samples: list[ContactSample], model_cfg: ModelConfig) -> list[PreparedSample]:
    prepared = []
    spec = model_cfg.points.geometry_spec()
    stride = model_cfg.image.total_stride
    for s in samples:
        h, w = s.image_u8.shape[:2]
        if h % stride or w % stride:
            raise ValueError(
                f"{s.sample_id}: image {h}x{w} not divisible by encoder stride {stride}"
            )
        normalized, _, _ = normalize_cloud(s.cloud.points)
        prepared.append(PreparedSample(
            sample_id=s.sample_id,
            image=torch.from_numpy(ImageInput.from_u8(s.image_u8).pixels),
            contact=torch.from_numpy(s.contact.contact.astype(np.float32)),
            part_mask=torch.from_numpy(s.part_mask.mask.astype(np.int64)),
            pyramid=build_pyramid(normalized, spec),
            points=s.cloud.points,
            faces=s.faces,
        ))
    return prepared


# ---------------------------------------------------------------------------
# training

@dataclass
class CheckpointSeries:
    checkpoint_paths: list[Path]
    final_checkpoint: Path
    log_path: Path
    losses: list[float]
    report: Optional[MetricsReport]


def _param_norms(model: torch.nn.Module) -> dict:
    return {name: float(p.detach().norm()) for name, p in model.named_parameters()}


def _lr_at(step: int, planned: int, opt_cfg: OptimizerConfig) -> float:
    warmup = min(50, max(planned // 10, 1))
    scale = min(1.0, (step + 1) / warmup)
    if opt_cfg.schedule == "constant":
        return opt_cfg.lr * scale
    if opt_cfg.schedule == "cosine":
        lo = opt_cfg.min_lr_fraction
        cos = 0.5 * (1.0 + math.cos(math.pi * step / max(planned, 1)))
        return opt_cfg.lr * scale * (lo + (1.0 - lo) * cos)
    raise ValueError(f"unknown schedule {opt_cfg.schedule!r}")


def train(cfg: ExperimentConfig, samples: Optional[list[ContactSample]] = None) -> CheckpointSeries:
    """Run one experiment; returns the checkpoint series.

    `samples` overrides loading cfg.train_split from cfg.data_dir (used by
    tests that generate data in memory).
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    setup_determinism(cfg.seed, cfg.deterministic)

    if samples is None:
        samples = dataset.load_split(Path(cfg.data_dir), cfg.train_split)
    if not samples:
        raise ValueError(f"empty split {cfg.train_split!r}")

    model_cfg = cfg.model_config()
    loss_cfg = cfg.loss_config()
    prepared = prepare_samples(samples, model_cfg)

    model = ContactNet(model_cfg)
    model.train()
    if cfg.optimizer.kind != "adam":
        raise ValueError(f"unknown optimizer {cfg.optimizer.kind!r}")
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.optimizer.lr,
                                 weight_decay=cfg.optimizer.weight_decay)

    rng = np.random.default_rng(cfg.seed)
    steps_per_epoch = math.ceil(len(prepared) / cfg.batch_size)
    planned = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        planned = min(planned, cfg.max_steps)

    log_path = out_dir / "train_log.jsonl"
    log_fh = open(log_path, "w")
    losses: list[float] = []
    checkpoint_paths: list[Path] = []
    use_part = not model_cfg.disable_part_branch

    step = 0
    done = False
    for _epoch in range(cfg.epochs):
        if done:
            break
        order = rng.permutation(len(prepared))
        for start in range(0, len(prepared), cfg.batch_size):
            batch = [prepared[i] for i in order[start:start + cfg.batch_size]]
            lr = _lr_at(step, planned, cfg.optimizer)
            for group in optimizer.param_groups:
                group["lr"] = lr

            optimizer.zero_grad()
            lc_terms = []
            lp_terms = []
            for item in batch:
                out = model(item.image, item.pyramid)
                lc_terms.append(contact_loss_with_logits(out["logits"], item.contact, loss_cfg))
                if use_part:
                    lp_terms.append(part_loss(out["part_logits"], item.part_mask))
            lc = torch.stack(lc_terms).mean()
            if use_part:
                lp = torch.stack(lp_terms).mean()
                loss = total_loss(lc, lp, loss_cfg)
            else:
                lp = torch.zeros(())
                loss = loss_cfg.contact_weight * lc

            if not torch.isfinite(loss):
                dump = out_dir / "diverged.json"
                dump.write_text(json.dumps({
                    "step": step,
                    "batch_ids": [b.sample_id for b in batch],
                    "loss_contact": float(lc.detach()),
                    "loss_part": float(lp.detach()),
                    "param_norms": _param_norms(model),
                }, indent=2, sort_keys=True))
                log_fh.close()
                raise TrainingDiverged(step, [b.sample_id for b in batch], dump)

            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))

            if step % cfg.log_every == 0 or step == planned - 1:
                log_fh.write(json.dumps({
                    "step": step,
                    "loss_total": float(loss.detach()),
                    "loss_contact": float(lc.detach()),
                    "loss_part": float(lp.detach()),
                    "lr": lr,
                    "timestamp": time.time(),
                }) + "\n")
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                checkpoint_paths.append(
                    save_checkpoint(out_dir / f"checkpoint_{step + 1:06d}.grck", cfg, model)
                )
            step += 1
            if step >= planned:
                done = True
                break
    log_fh.close()

    final = save_checkpoint(out_dir / "checkpoint_final.grck", cfg, model)
    checkpoint_paths.append(final)

    eval_samples = samples
    if cfg.data_dir:
        try:
            held_out = dataset.load_split(Path(cfg.data_dir), cfg.eval_split)
            if held_out:
                eval_samples = held_out
        except FileNotFoundError:
            pass
    report = evaluate_model(model, eval_samples, deterministic=cfg.deterministic)
    (out_dir / "report.csv").write_text(report_csv(report))
    (out_dir / "report.txt").write_text(report_text(report))
    return CheckpointSeries(checkpoint_paths=checkpoint_paths, final_checkpoint=final,
                            log_path=log_path, losses=losses, report=report)


# ---------------------------------------------------------------------------
# evaluation

def topology_index(sample_points: np.ndarray, faces: Optional[np.ndarray]) -> GeodesicIndex:
    if faces is not None:
        topo = MeshTopology.from_faces(faces, sample_points)
        return GeodesicIndex.from_topology(topo, len(sample_points))
    return GeodesicIndex.from_cloud(sample_points)


def evaluate_model(model: ContactNet, samples: list[ContactSample],
                   threshold: Optional[float] = None,
                   deterministic: bool = True) -> MetricsReport:
    if not samples:
        raise ValueError("empty split")
    model.eval()
    preds = []
    for s in samples:
        pred = model.predict(s.image_u8, s.cloud.points, threshold=threshold)
        preds.append(pred.binary)

    def score(args):
        s, binary = args
        index = topology_index(s.cloud.points, s.faces)
        return score_sample(s.sample_id, binary, s.contact.contact.astype(bool), index)

    if deterministic:
        rows = [score(pair) for pair in zip(samples, preds)]
    else:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(score, zip(samples, preds)))
    return MetricsReport(per_sample=rows)


def evaluate(checkpoint_path: Path, data_dir: Path, split: str,
             threshold: Optional[float] = None,
             deterministic: bool = True) -> MetricsReport:
    model, cfg = load_model(checkpoint_path)
    setup_determinism(cfg.seed, deterministic)
    samples = dataset.load_split(Path(data_dir), split)
    return evaluate_model(model, samples, threshold=threshold, deterministic=deterministic)
