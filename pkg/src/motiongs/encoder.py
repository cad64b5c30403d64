"""Latentbone encoder: partitioned pose + clothes latent -> per-frame feature.

Each body-part parameter group is concatenated with the clothes latent and
passed through its own single dense layer; the four branch outputs are fused
by a two-layer MLP into the frame feature. With part segmentation disabled
the whole pose goes through one branch of matched width.

The encoder uses tanh activations throughout: with relu the entire fusion
layer can be driven into the dead region early in training (the cheapest way
for the optimizer to silence the deformation field), after which the frame
feature is constant and the temporal model can never recover pose
sensitivity. tanh keeps gradients flowing regardless of the operating point.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import DenseLayer, MLP, ParamStore
from .rig import PARTS, Pose, Rig


class LatentboneEncoder:
    def __init__(self, store: ParamStore, rig: Rig, rng,
                 latent_dim=16, branch_dim=32, fusion_hidden=128, out_dim=64,
                 no_part_segmentation=False, no_clothes_latent=False,
                 name="latentbone"):
        self.rig = rig
        self.latent_dim = latent_dim
        self.out_dim = out_dim
        self.no_part_segmentation = no_part_segmentation
        self.no_clothes_latent = no_clothes_latent
        dims = rig.part_dims()
        self.part_dims = dims
        if no_part_segmentation:
            total = sum(dims.values())
            # one branch, width matched to the four separate branches
            self.branches = {"all": DenseLayer(
                store, f"{name}/branch_all", total + latent_dim, 4 * branch_dim,
                activation="tanh", rng=rng)}
        else:
            self.branches = {
                part: DenseLayer(store, f"{name}/branch_{part}", dims[part] + latent_dim,
                                 branch_dim, activation="tanh", rng=rng)
                for part in PARTS
            }
        self.fusion = MLP(store, f"{name}/fusion", [4 * branch_dim, fusion_hidden, out_dim],
                          acts=["tanh", "identity"], rng=rng)
        self.z_c = store.add(f"{name}/z_c", rng.normal(scale=0.1, size=latent_dim))

    def _latent(self) -> Tensor:
        if self.no_clothes_latent:
            return Tensor(np.zeros(self.latent_dim))
        return self.z_c

    def branch_outputs(self, parts: dict[str, np.ndarray]) -> dict[str, Tensor]:
        z = self._latent()
        if self.no_part_segmentation:
            full = ad.concat([ad.as_tensor(parts[p]) for p in PARTS] + [z])
            return {"all": self.branches["all"](full)}
        out = {}
        for part in PARTS:
            vec = ad.as_tensor(parts[part])
            if vec.shape[0] != self.part_dims[part]:
                raise ValueError(f"part '{part}' dim {vec.shape[0]} != {self.part_dims[part]}")
            out[part] = self.branches[part](ad.concat([vec, z]))
        return out

    def encode_frame(self, parts: dict[str, np.ndarray]) -> Tensor:
        branch = self.branch_outputs(parts)
        if self.no_part_segmentation:
            fused_in = branch["all"]
        else:
            fused_in = ad.concat([branch[p] for p in PARTS])
        return self.fusion(fused_in)

    def encode_pose(self, pose: Pose) -> Tensor:
        return self.encode_frame(self.rig.partition_pose(pose))

    def encode_track(self, poses: list[Pose]) -> list[Tensor]:
        if not poses:
            raise ValueError("empty pose track")
        return [self.encode_pose(p) for p in poses]
