import numpy as np
import pytest
import torch

from spaa.attention import AttentionRecord
from spaa.toy_backend import ToyDenoiser


@pytest.fixture(scope="session")
def light_backend() -> ToyDenoiser:
    """Single res-8 block: full contract, negligible cost.

    Used wherever a test exercises loop logic rather than the
    resolution ladder itself.
    """
    return ToyDenoiser(arch_seed=0, resolutions=(8,))


@pytest.fixture(scope="session")
def full_backend() -> ToyDenoiser:
    """The production toy ladder; expensive, so shared per session."""
    return ToyDenoiser(arch_seed=0)


def random_stochastic_map(rng: np.random.Generator, n: int) -> torch.Tensor:
    raw = rng.random((n, n)).astype(np.float32) + 1e-3
    m = torch.from_numpy(raw)
    return m / m.sum(dim=-1, keepdim=True)


def make_record(
    rng: np.random.Generator,
    layer_id: str = "b0.self",
    kind: str = "self",
    resolution: int = 4,
    timestep: int = 0,
    head: int = 0,
    n_k: int | None = None,
    d_k: int = 8,
    d_v: int = 8,
) -> AttentionRecord:
    n_q = resolution * resolution
    n_k = n_q if kind == "self" else (n_k or 5)
    raw = rng.random((n_q, n_k)).astype(np.float32) + 1e-3
    attn_map = torch.from_numpy(raw)
    attn_map /= attn_map.sum(dim=-1, keepdim=True)
    return AttentionRecord(
        layer_id=layer_id,
        kind=kind,
        resolution=resolution,
        timestep=timestep,
        head=head,
        query=torch.from_numpy(rng.standard_normal((n_q, d_k)).astype(np.float32)),
        key=torch.from_numpy(rng.standard_normal((n_k, d_k)).astype(np.float32)),
        value=torch.from_numpy(rng.standard_normal((n_k, d_v)).astype(np.float32)),
        map=attn_map,
    )
