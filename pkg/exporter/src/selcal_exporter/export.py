"""Export job: run a backbone over a dataset split and emit a .selc file."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np
import torch

from .container import write_selc
from .models import build_backbone


@dataclass
class ExportJob:
    model: str
    dataset: str
    split: str
    out_path: str
    batch_size: int = 32
    device: str = "cpu"
    augmix: bool = False          # image-space augmentation for the OOD protocol
    checkpoint: str | None = None
    n_images: int = 256           # size of the synthetic split
    seed: int = 0


@dataclass
class ExportResult:
    n: int
    embed_dim: int
    num_classes: int
    checksums: dict[str, str]


def _synthetic_split(job: ExportJob):
    gen = torch.Generator().manual_seed(job.seed)
    images = torch.randint(0, 256, (job.n_images, 3, 32, 32), generator=gen,
                           dtype=torch.uint8)
    labels = torch.randint(0, 10, (job.n_images,), generator=gen)
    return images, labels


def _torchvision_split(job: ExportJob):
    import torchvision

    name, _, root = job.dataset.partition(":")
    root = root or "./data"
    if name == "cifar100":
        try:
            ds = torchvision.datasets.CIFAR100(
                root=root, train=(job.split == "train"), download=False
            )
        except RuntimeError as exc:
            raise FileNotFoundError(
                f"CIFAR-100 assets not found under {root!r}: {exc}"
            ) from exc
        images = torch.from_numpy(ds.data).permute(0, 3, 1, 2).contiguous()
        labels = torch.tensor(ds.targets)
        return images, labels
    if name == "imagefolder":
        if not os.path.isdir(root):
            raise FileNotFoundError(f"image folder {root!r} does not exist")
        from torchvision import transforms

        tf = transforms.Compose([
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.PILToTensor(),
        ])
        ds = torchvision.datasets.ImageFolder(os.path.join(root, job.split), tf)
        images = torch.stack([ds[i][0] for i in range(len(ds))])
        labels = torch.tensor([ds[i][1] for i in range(len(ds))])
        return images, labels
    raise ValueError(f"unknown dataset {job.dataset!r}")


def _load_split(job: ExportJob):
    if job.dataset == "synthetic":
        return _synthetic_split(job)
    return _torchvision_split(job)


def _preprocess(job: ExportJob, images: torch.Tensor) -> torch.Tensor:
    if job.augmix:
        from torchvision.transforms import AugMix

        torch.manual_seed(job.seed + 1)
        aug = AugMix(severity=3, mixture_width=3)
        images = torch.stack([aug(img) for img in images])
    return images.float() / 255.0


def export(job: ExportJob) -> ExportResult:
    """Run the backbone in eval mode and write embeddings/logits/labels."""
    images, labels = _load_split(job)
    images = _preprocess(job, images)
    device = torch.device(job.device)
    features, head = build_backbone(job.model, job.checkpoint, seed=job.seed)
    features.to(device)
    head.to(device)

    emb_parts, logit_parts = [], []
    with torch.no_grad():
        for start in range(0, images.shape[0], job.batch_size):
            batch = images[start : start + job.batch_size].to(device)
            emb = features(batch)
            logit_parts.append(head(emb).cpu().numpy())
            emb_parts.append(emb.cpu().numpy())
    embeddings = np.concatenate(emb_parts).astype(np.float32)
    logits = np.concatenate(logit_parts).astype(np.float32)
    lab = labels.numpy().astype(np.uint32)
    if logits.shape[0] != lab.shape[0]:
        raise RuntimeError(
            f"dimension probe mismatch: {logits.shape[0]} logit rows for "
            f"{lab.shape[0]} labels"
        )

    name = f"{job.model}:{job.dataset}:{job.split}" + (":augmix" if job.augmix else "")
    write_selc(job.out_path, embeddings, logits, lab, name=name)
    checksums = {
        "embeddings": hashlib.sha256(embeddings.tobytes()).hexdigest(),
        "logits": hashlib.sha256(logits.tobytes()).hexdigest(),
        "labels": hashlib.sha256(lab.tobytes()).hexdigest(),
    }
    return ExportResult(
        n=int(lab.shape[0]),
        embed_dim=int(embeddings.shape[1]),
        num_classes=int(logits.shape[1]),
        checksums=checksums,
    )
