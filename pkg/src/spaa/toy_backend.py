"""Deterministic miniature diffusion backend for desk-scale testing.

The denoiser is a ladder of attention blocks at spatial resolutions
64, 32, 16, 8, 16, 32, 64 (down/mid/up), each holding one self- and one
cross-attention layer with 2 heads, d_k = 16, and d_text = 32, over a
4x64x64 latent.  Every block reads the (pooled) latent independently
and the block outputs are averaged into a single bounded residual
update, so within one step an intervention at one layer cannot bleed
into another layer's maps.

All weights are drawn from a seeded PRNG at construction: equal
``arch_seed`` means bitwise-equal weights.  The backend produces
structured noise, not recognizable objects; it exists to verify the
intervention mechanics, not perceptual quality.

Weights are immutable after construction, but each instance owns
reusable map workspaces (fresh 64 MB map allocations per step would
dominate the runtime), so concurrent ``denoise_step`` calls need one
instance per thread; ``twin()`` hands out a weight-identical sibling.
"""

from __future__ import annotations

import hashlib
import math
from typing import Optional

import numpy as np
import torch

from .attention import AttentionRecord, attention_map_into, row_softmax, project_qkv
from .backend import (
    AttentionHooks,
    AttentionLayerInfo,
    CrossAttentionContext,
    reraise_with_step_context,
)

DEFAULT_RESOLUTIONS = (64, 32, 16, 8, 16, 32, 64)
LATENT_CHANNELS = 4
LATENT_SIDE = 64
D_MODEL = 32
D_TEXT = 32
N_HEADS = 2
D_HEAD = 16
RESIDUAL_COEFF = 0.1
IMAGE_SIDE = 512

_TOKEN_SALT = b"toy-text-v1:"


def whitespace_tokenize(prompt: str) -> list[str]:
    """Lowercase whitespace tokenizer; real backends supply their own."""
    return prompt.lower().split()


def _token_embedding(token: str) -> np.ndarray:
    digest = hashlib.blake2b(_TOKEN_SALT + token.encode("utf-8"), digest_size=8)
    seed = int.from_bytes(digest.digest(), "little")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, D_TEXT).astype(np.float32)


class ToyDenoiser:
    """Random-weight attention-ladder denoiser satisfying the backend contract."""

    def __init__(self, arch_seed: int = 0, resolutions: tuple[int, ...] = DEFAULT_RESOLUTIONS):
        for res in resolutions:
            if LATENT_SIDE % res != 0:
                raise ValueError(f"resolution {res} does not divide latent side {LATENT_SIDE}")
        self.arch_seed = arch_seed
        self.resolutions = tuple(resolutions)
        self.backend_id = f"toy:{arch_seed}"
        rng = np.random.default_rng(arch_seed)

        def weight(n_in: int, n_out: int) -> torch.Tensor:
            w = rng.standard_normal((n_in, n_out)) / math.sqrt(n_in)
            return torch.from_numpy(w.astype(np.float32))

        self.blocks = []
        for res in self.resolutions:
            self.blocks.append(
                {
                    "resolution": res,
                    "w_in": weight(LATENT_CHANNELS, D_MODEL),
                    "self_q": weight(D_MODEL, D_MODEL),
                    "self_k": weight(D_MODEL, D_MODEL),
                    "self_v": weight(D_MODEL, D_MODEL),
                    "self_o": weight(D_MODEL, D_MODEL),
                    "cross_q": weight(D_MODEL, D_MODEL),
                    "cross_k": weight(D_TEXT, D_MODEL),
                    "cross_v": weight(D_TEXT, D_MODEL),
                    "cross_o": weight(D_MODEL, D_MODEL),
                    "w_out": weight(D_MODEL, LATENT_CHANNELS),
                }
            )
        mix = rng.uniform(0.0, 1.0, (3, LATENT_CHANNELS))
        mix /= mix.sum(axis=1, keepdims=True)
        self.decode_mix = torch.from_numpy(mix.astype(np.float32))
        self._token_cache: dict[str, np.ndarray] = {}
        self._map_ws: dict[int, torch.Tensor] = {}
        self._twin: Optional["ToyDenoiser"] = None

    # -- contract surface ---------------------------------------------------

    def tokenize(self, prompt: str) -> list[str]:
        return whitespace_tokenize(prompt)

    def encode_text(self, prompt: str) -> torch.Tensor:
        tokens = self.tokenize(prompt)
        if not tokens:
            raise ValueError("prompt is empty after tokenization")
        rows = []
        for tok in tokens:
            if tok not in self._token_cache:
                self._token_cache[tok] = _token_embedding(tok)
            rows.append(self._token_cache[tok])
        return torch.from_numpy(np.stack(rows))

    def init_latent(self, seed: int) -> torch.Tensor:
        rng = np.random.default_rng(seed)
        lat = rng.standard_normal((LATENT_CHANNELS, LATENT_SIDE, LATENT_SIDE))
        return torch.from_numpy(lat.astype(np.float32))

    def enumerate_attention_layers(self) -> list[AttentionLayerInfo]:
        layers = []
        for i, res in enumerate(self.resolutions):
            layers.append(AttentionLayerInfo(f"b{i}.self", "self", res))
            layers.append(AttentionLayerInfo(f"b{i}.cross", "cross", res))
        return layers

    def denoise_step(
        self,
        latent: torch.Tensor,
        timestep: int,
        embeddings: torch.Tensor,
        hooks: AttentionHooks = AttentionHooks(),
    ) -> torch.Tensor:
        t_vec = self._time_vector(timestep)
        contrib = torch.zeros_like(latent)
        for i, block in enumerate(self.blocks):
            contrib += self._block_forward(
                i, block, latent, t_vec, embeddings, timestep, hooks
            )
        return latent + RESIDUAL_COEFF * (contrib / len(self.blocks))

    def decode(self, latent: torch.Tensor) -> np.ndarray:
        """Fixed upsampling decode to a 3x512x512 image in [0, 1]."""
        squashed = torch.sigmoid(latent)
        rgb = torch.einsum("cf,fhw->chw", self.decode_mix, squashed)
        factor = IMAGE_SIDE // LATENT_SIDE
        img = rgb.repeat_interleave(factor, dim=1).repeat_interleave(factor, dim=2)
        return img.clamp(0.0, 1.0).numpy()

    def sample(
        self,
        prompt: str,
        seed: int,
        steps: int,
        hooks: AttentionHooks = AttentionHooks(),
    ) -> np.ndarray:
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        embeddings = self.encode_text(prompt)
        latent = self.init_latent(seed)
        for k in range(steps):
            latent = self.denoise_step(latent, k, embeddings, hooks)
        return self.decode(latent)

    # -- extras -------------------------------------------------------------

    def weights_fingerprint(self) -> str:
        h = hashlib.sha256()
        for block in self.blocks:
            for name in sorted(block):
                if name == "resolution":
                    continue
                h.update(block[name].numpy().tobytes())
        h.update(self.decode_mix.numpy().tobytes())
        return h.hexdigest()

    def twin(self) -> "ToyDenoiser":
        """A second instance with bitwise-equal weights but separate workspaces.

        Lockstep dual-branch runs use it so one branch's records stay
        valid while the other branch computes.
        """
        if self._twin is None:
            self._twin = ToyDenoiser(self.arch_seed, self.resolutions)
        return self._twin

    # -- internals ----------------------------------------------------------

    def _time_vector(self, timestep: int) -> torch.Tensor:
        d = D_MODEL // 2
        freqs = np.exp(-np.arange(d) * math.log(10000.0) / d)
        angles = timestep * freqs
        vec = np.concatenate([np.sin(angles), np.cos(angles)])
        return torch.from_numpy(vec.astype(np.float32))

    def _pool(self, latent: torch.Tensor, res: int) -> torch.Tensor:
        f = LATENT_SIDE // res
        pooled = latent.view(LATENT_CHANNELS, res, f, res, f).mean(dim=(2, 4))
        return pooled.reshape(LATENT_CHANNELS, res * res).T.contiguous()

    def _map_workspace(self, block_idx: int, n: int) -> torch.Tensor:
        ws = self._map_ws.get(block_idx)
        if ws is None or ws.shape[1] != n:
            ws = torch.empty(N_HEADS, n, n)
            self._map_ws[block_idx] = ws
        return ws


    def _block_forward(
        self,
        block_idx: int,
        block: dict,
        latent: torch.Tensor,
        t_vec: torch.Tensor,
        embeddings: torch.Tensor,
        timestep: int,
        hooks: AttentionHooks,
    ) -> torch.Tensor:
        res = block["resolution"]
        n = res * res
        feats = self._pool(latent, res) @ block["w_in"] + t_vec

        # self-attention: maps pass through the self_map hook per head
        q, k, v = project_qkv(feats, block["self_q"], block["self_k"], block["self_v"])
        map_ws = self._map_workspace(block_idx, n)
        head_outs = []
        layer_id = f"b{block_idx}.self"
        try:
            for h in range(N_HEADS):
                cols = slice(h * D_HEAD, (h + 1) * D_HEAD)
                q_h, k_h, v_h = q[:, cols], k[:, cols], v[:, cols]
                attention_map_into(q_h, k_h, out=map_ws[h])
                rec = AttentionRecord(
                    layer_id=layer_id,
                    kind="self",
                    resolution=res,
                    timestep=timestep,
                    head=h,
                    query=q_h,
                    key=k_h,
                    value=v_h,
                    map=map_ws[h],
                )
                if hooks.self_map is not None:
                    rec = hooks.self_map(rec)
                if hooks.observe is not None:
                    hooks.observe(rec)
                head_outs.append(rec.map @ v_h)
        except Exception as exc:
            reraise_with_step_context(exc, timestep, layer_id)
        feats = feats + torch.cat(head_outs, dim=1) @ block["self_o"]

        # cross-attention: full-width text K/V pass through the cross hook
        layer_id = f"b{block_idx}.cross"
        q, k_full, v_full = project_qkv(
            feats,
            block["cross_q"],
            block["cross_k"],
            block["cross_v"],
            kind="cross",
            text_embedding=embeddings,
        )
        head_outs = []
        scale = 1.0 / math.sqrt(D_HEAD)
        try:
            if hooks.cross_text is not None:
                ctx = CrossAttentionContext(timestep, layer_id, res)
                k_full, v_full = hooks.cross_text(ctx, k_full, v_full)
            for h in range(N_HEADS):
                cols = slice(h * D_HEAD, (h + 1) * D_HEAD)
                q_h, k_h, v_h = q[:, cols], k_full[:, cols], v_full[:, cols]
                attn_map = row_softmax((q_h * scale) @ k_h.T)
                if hooks.observe is not None:
                    hooks.observe(
                        AttentionRecord(
                            layer_id=layer_id,
                            kind="cross",
                            resolution=res,
                            timestep=timestep,
                            head=h,
                            query=q_h,
                            key=k_h,
                            value=v_h,
                            map=attn_map,
                        )
                    )
                head_outs.append(attn_map @ v_h)
        except Exception as exc:
            reraise_with_step_context(exc, timestep, layer_id)
        feats = feats + torch.cat(head_outs, dim=1) @ block["cross_o"]

        out = torch.tanh(feats @ block["w_out"])
        f = LATENT_SIDE // res
        grid = out.T.reshape(LATENT_CHANNELS, res, res)
        return grid.repeat_interleave(f, dim=1).repeat_interleave(f, dim=2)
