"""Sequence VAE over SMILES: tokenizer-backed vocabulary, bidirectional
gated-recurrent encoder producing a diagonal Gaussian, autoregressive
gated-recurrent decoder conditioned on the latent vector, and joint
drug-likeness / synthetic-accessibility regression heads.

The latent code is fed to the decoder twice: as the initial hidden state of
every layer and concatenated onto each input embedding. Reconstruction loss
is mean per-token cross-entropy with teacher forcing; the KL term is the
closed-form divergence between the diagonal posterior and a standard normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .chem import Molecule, canonical_smiles, tokenize
from .nn import (
    Adam,
    BidirectionalGru,
    DenseNet,
    Embedding,
    GatedRecurrentCell,
    Linear,
    Tensor,
    concat,
    dropout,
    finite_checks,
    merge_parameters,
    no_grad,
    save_checkpoint,
    load_checkpoint,
    assign_parameters,
    softmax_cross_entropy,
)
from .nn.train import Diverged

CHECKPOINT_TAG = "smiles-vae-v1"


class UnknownToken(ValueError):
    pass


class MissingLabels(ValueError):
    pass


class VocabularyMismatch(ValueError):
    pass


class Vocabulary:
    """Token list with PAD/BOS/EOS specials; PAD is index 0. Multi-character
    atoms and bracket spans are single tokens (straight from the SMILES
    tokenizer), so detokenization is plain concatenation."""

    PAD, BOS, EOS = 0, 1, 2
    SPECIALS = ("<pad>", "<bos>", "<eos>")

    def __init__(self, tokens: list[str]):
        self.tokens = list(self.SPECIALS) + list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, corpora: list[list[str]]) -> "Vocabulary":
        seen: set[str] = set()
        for corpus in corpora:
            for smiles in corpus:
                for token in tokenize(smiles):
                    seen.add(token.text)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, smiles: str) -> list[int]:
        ids = []
        for token in tokenize(smiles):
            idx = self.index.get(token.text)
            if idx is None:
                raise UnknownToken(f"token {token.text!r} not in vocabulary")
            ids.append(idx)
        return ids

    def decode(self, ids: list[int]) -> str:
        parts = []
        for idx in ids:
            if idx in (self.PAD, self.BOS):
                continue
            if idx == self.EOS:
                break
            parts.append(self.tokens[idx])
        return "".join(parts)


@dataclass
class VaeConfig:
    latent_dim: int = 128
    embed_dim: int = 64
    encoder_hidden: int = 256
    decoder_hidden: int = 256
    decoder_layers: int = 2
    decoder_dropout: float = 0.2
    input_word_dropout: float = 0.7
    input_word_dropout_end: float = 0.3
    head_hidden: int = 64
    max_len: int = 128
    kl_weight_end: float = 0.03
    kl_anneal_frac: float = 0.2
    property_weight: float = 1.0
    learning_rate: float = 2e-3
    batch_size: int = 64

    def to_dict(self) -> dict:
        return asdict(self)


class VaeModel:
    def __init__(self, vocab: Vocabulary, config: VaeConfig, seed: int):
        self.vocab = vocab
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        c = config
        vsz = len(vocab)
        self.embedding = Embedding(vsz, c.embed_dim, rng)
        self.encoder = BidirectionalGru(c.embed_dim, c.encoder_hidden, rng)
        self.enc_head = Linear(2 * c.encoder_hidden, 2 * c.latent_dim, rng)
        # Start with a tight posterior (sigma ~ 0.14) so the decoder can rely
        # on z from the first updates; the KL term re-widens it as needed.
        self.enc_head.bias.data[c.latent_dim:] = -4.0
        self.dec_init = Linear(c.latent_dim, c.decoder_layers * c.decoder_hidden, rng)
        self.dec_cells = []
        for layer in range(c.decoder_layers):
            base = c.embed_dim if layer == 0 else c.decoder_hidden
            self.dec_cells.append(GatedRecurrentCell(base + c.latent_dim, c.decoder_hidden, rng))
        # The latent code also feeds the output layer directly: a short
        # gradient path that keeps the encoder engaged.
        self.dec_out = Linear(c.decoder_hidden + c.latent_dim, vsz, rng)
        head_widths = [c.latent_dim, c.head_hidden, 1]
        self.qed_head = DenseNet(head_widths, ["relu", "identity"], None, rng)
        self.sa_head = DenseNet(head_widths, ["relu", "identity"], None, rng)

    # -- parameter plumbing --------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        parts = {
            "embedding": self.embedding.parameters(),
            "encoder": self.encoder.parameters(),
            "enc_head": self.enc_head.parameters(),
            "dec_init": self.dec_init.parameters(),
            "dec_out": self.dec_out.parameters(),
            "qed_head": self.qed_head.parameters(),
            "sa_head": self.sa_head.parameters(),
        }
        for i, cell in enumerate(self.dec_cells):
            parts[f"dec_cell{i}"] = cell.parameters()
        return merge_parameters(parts)

    def topology(self) -> dict:
        return {
            "tag": CHECKPOINT_TAG,
            "config": self.config.to_dict(),
            "vocabulary": self.vocab.tokens[len(Vocabulary.SPECIALS):],
            "seed": self.seed,
        }

    def save(self, path: str | Path, metadata: dict | None = None) -> None:
        save_checkpoint(path, self.topology(), self.parameters(), metadata)

    @classmethod
    def load(cls, path: str | Path) -> "VaeModel":
        topology, params, _ = load_checkpoint(path)
        if topology.get("tag") != CHECKPOINT_TAG:
            raise ValueError(f"not a {CHECKPOINT_TAG} checkpoint")
        vocab = Vocabulary(topology["vocabulary"])
        config = VaeConfig(**topology["config"])
        model = cls(vocab, config, topology["seed"])
        assign_parameters(model.parameters(), params)
        return model

    # -- forward passes --------------------------------------------------------

    def encoder_forward(self, padded: np.ndarray, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """padded: [B, T] int ids; mask: [B, T] 0/1. Returns (mu, log_var)."""
        batch, steps = padded.shape
        flat_ids = padded.T.reshape(-1)  # time-major
        embs = self.embedding(flat_ids)
        # Zero out embeddings at padded positions so they cannot leak in.
        embs = embs * Tensor(mask.T.reshape(-1, 1))
        final = self.encoder.final_states_big(embs, batch, steps)
        out = self.enc_head(final)
        latent = self.config.latent_dim
        return out.slice_cols(0, latent), out.slice_cols(latent, 2 * latent)

    def _decoder_initial(self, z: Tensor) -> list[Tensor]:
        h = self.dec_init(z).tanh()
        hidden = self.config.decoder_hidden
        return [
            h.slice_cols(i * hidden, (i + 1) * hidden)
            for i in range(self.config.decoder_layers)
        ]

    def decoder_step(
        self,
        token_ids: np.ndarray,
        z: Tensor,
        states: list[Tensor],
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, list[Tensor]]:
        x = self.embedding(token_ids)
        new_states = []
        for layer, cell in enumerate(self.dec_cells):
            h = cell.step(concat([x, z], axis=1), states[layer])
            new_states.append(h)
            x = h
            if train and self.config.decoder_dropout > 0 and layer < len(self.dec_cells) - 1:
                x = dropout(x, self.config.decoder_dropout, rng)
        return self.dec_out(concat([x, z], axis=1)), new_states

    # -- public encode / decode -------------------------------------------------

    def encode(
        self, mol: Molecule | str, mode: str = "mean", seed: int = 0
    ) -> np.ndarray:
        smiles = mol if isinstance(mol, str) else canonical_smiles(mol)
        ids = self.vocab.encode(smiles)
        padded = np.array([ids], dtype=np.int64)
        mask = np.ones_like(padded, dtype=np.float64)
        with no_grad():
            mu, log_var = self.encoder_forward(padded, mask)
        if mode == "mean":
            return mu.data[0].copy()
        if mode == "sample":
            rng = np.random.default_rng(seed)
            sigma = np.exp(0.5 * log_var.data[0])
            return mu.data[0] + sigma * rng.standard_normal(self.config.latent_dim)
        raise ValueError(f"unknown encode mode {mode!r}")

    def decode(
        self,
        z: np.ndarray,
        strategy: str = "greedy",
        temperature: float = 1.0,
        max_len: int | None = None,
        seed: int = 0,
    ) -> str:
        return self.decode_batch(
            z.reshape(1, -1), strategy=strategy, temperature=temperature,
            max_len=max_len, seed=seed,
        )[0]

    def decode_batch(
        self,
        zs: np.ndarray,
        strategy: str = "greedy",
        temperature: float = 1.0,
        max_len: int | None = None,
        seed: int = 0,
    ) -> list[str]:
        """Autoregressive generation from BOS until EOS or max_len. Greedy is
        deterministic; temperature 0 equals greedy. Output strings are raw
        token sequences; validity is judged downstream by the parser."""
        if strategy == "temperature" and temperature <= 0.0:
            strategy = "greedy"
        max_len = max_len or self.config.max_len
        n = zs.shape[0]
        rng = np.random.default_rng(seed)
        z = Tensor(np.asarray(zs, dtype=np.float64))
        with no_grad():
            states = self._decoder_initial(z)
            tokens = np.full(n, Vocabulary.BOS, dtype=np.int64)
            done = np.zeros(n, dtype=bool)
            outputs: list[list[int]] = [[] for _ in range(n)]
            for _ in range(max_len):
                logits, states = self.decoder_step(tokens, z, states)
                scores = logits.data.copy()
                scores[:, Vocabulary.PAD] = -1e30
                scores[:, Vocabulary.BOS] = -1e30
                if strategy == "greedy":
                    nxt = scores.argmax(axis=1)
                elif strategy == "temperature":
                    scaled = scores / temperature
                    scaled -= scaled.max(axis=1, keepdims=True)
                    probs = np.exp(scaled)
                    probs /= probs.sum(axis=1, keepdims=True)
                    nxt = np.array(
                        [rng.choice(len(self.vocab), p=probs[i]) for i in range(n)]
                    )
                else:
                    raise ValueError(f"unknown decode strategy {strategy!r}")
                for i in range(n):
                    if not done[i]:
                        if nxt[i] == Vocabulary.EOS:
                            done[i] = True
                        else:
                            outputs[i].append(int(nxt[i]))
                if done.all():
                    break
                tokens = np.where(done, Vocabulary.EOS, nxt)
        return [self.vocab.decode(ids) for ids in outputs]


# ---------------------------------------------------------------------------
# Batching and losses

@dataclass
class Batch:
    padded: np.ndarray        # [B, T] input ids (no specials)
    mask: np.ndarray          # [B, T] 1 where real token
    dec_inputs: np.ndarray    # [B, T+1] BOS + ids
    dec_targets: np.ndarray   # [B, T+1] ids + EOS (PAD after)
    dec_mask: np.ndarray      # [B, T+1]
    qed: np.ndarray | None = None
    sa: np.ndarray | None = None


def make_batch(
    vocab: Vocabulary,
    smiles: list[str],
    qed: np.ndarray | None = None,
    sa: np.ndarray | None = None,
) -> Batch:
    seqs = [vocab.encode(s) for s in smiles]
    max_t = max(len(s) for s in seqs)
    n = len(seqs)
    padded = np.zeros((n, max_t), dtype=np.int64)
    mask = np.zeros((n, max_t))
    dec_inputs = np.zeros((n, max_t + 1), dtype=np.int64)
    dec_targets = np.zeros((n, max_t + 1), dtype=np.int64)
    dec_mask = np.zeros((n, max_t + 1))
    for i, seq in enumerate(seqs):
        t = len(seq)
        padded[i, :t] = seq
        mask[i, :t] = 1.0
        dec_inputs[i, 0] = Vocabulary.BOS
        dec_inputs[i, 1 : t + 1] = seq
        dec_targets[i, :t] = seq
        dec_targets[i, t] = Vocabulary.EOS
        dec_mask[i, : t + 1] = 1.0
    return Batch(padded, mask, dec_inputs, dec_targets, dec_mask, qed, sa)


def kl_divergence(mu: Tensor, log_var: Tensor) -> Tensor:
    """Closed-form KL(N(mu, diag exp(log_var)) || N(0, I)), mean over batch."""
    batch = mu.shape[0]
    term = mu * mu + log_var.exp() - log_var - 1.0
    return term.sum() * (0.5 / batch)


def elbo_loss(
    model: VaeModel,
    batch: Batch,
    beta: float = 1.0,
    property_weight: float | None = None,
    rng: np.random.Generator | None = None,
    train: bool = True,
    word_dropout: float | None = None,
) -> dict[str, Tensor | float]:
    """Total objective and its components.

    total = recon + beta * kl + lambda * (qed_mse + sa_mse); recon is mean
    per-token cross-entropy under teacher forcing. Supervised mode (nonzero
    property weight) requires qed/sa labels in the batch.
    """
    lam = model.config.property_weight if property_weight is None else property_weight
    if word_dropout is None:
        word_dropout = model.config.input_word_dropout
    if lam > 0 and (batch.qed is None or batch.sa is None):
        raise MissingLabels("supervised ELBO needs qed and sa labels")
    rng = rng or np.random.default_rng(0)
    mu, log_var = model.encoder_forward(batch.padded, batch.mask)
    eps = rng.standard_normal(mu.shape)
    z = mu + (log_var * 0.5).exp() * Tensor(eps)

    # Teacher forcing lets every decoder layer scan the full sequence with
    # one fused input projection; the output head and cross-entropy then run
    # once over all timesteps (time-major layout).
    n_batch, n_steps = batch.dec_inputs.shape
    states = model._decoder_initial(z)
    flat_ids = batch.dec_inputs.T.reshape(-1)
    embs = model.embedding(flat_ids)
    if train and word_dropout > 0:
        # Blank whole input embeddings at random so the decoder cannot lean
        # on teacher forcing alone and must read the latent code.
        keep = rng.random((embs.shape[0], 1)) >= word_dropout
        embs = embs * Tensor(keep.astype(np.float64))
    z_big = z.repeat_rows(n_steps)
    x_big = embs
    for layer, cell in enumerate(model.dec_cells):
        pre_big = cell.precompute_inputs(concat([x_big, z_big], axis=1))
        layer_states = cell.scan_precomputed(pre_big, n_batch, n_steps, h0=states[layer])
        x_big = concat(layer_states, axis=0)
        if train and model.config.decoder_dropout > 0 and layer < len(model.dec_cells) - 1:
            x_big = dropout(x_big, model.config.decoder_dropout, rng)
    logits_big = model.dec_out(concat([x_big, z_big], axis=1))
    loss_sum, total_count = softmax_cross_entropy(
        logits_big, batch.dec_targets.T.reshape(-1), batch.dec_mask.T.reshape(-1)
    )
    recon = loss_sum * (1.0 / total_count)
    kl = kl_divergence(mu, log_var)
    total = recon + kl * beta

    qed_mse = Tensor(np.asarray(0.0))
    sa_mse = Tensor(np.asarray(0.0))
    if lam > 0:
        qed_pred = model.qed_head(z, train=train, rng=rng)
        sa_pred = model.sa_head(z, train=train, rng=rng)
        qed_diff = qed_pred - Tensor(batch.qed.reshape(-1, 1))
        sa_diff = sa_pred - Tensor(batch.sa.reshape(-1, 1))
        qed_mse = (qed_diff * qed_diff).mean()
        sa_mse = (sa_diff * sa_diff).mean()
        total = total + (qed_mse + sa_mse) * lam
    return {
        "total": total,
        "recon": recon,
        "kl": kl,
        "qed_mse": qed_mse,
        "sa_mse": sa_mse,
    }


# ---------------------------------------------------------------------------
# Training

@dataclass
class VaeTrainingReport:
    seed: int
    epochs: int
    losses: list[dict] = field(default_factory=list)
    skipped_too_long: int = 0


def _length_buckets(lengths: list[int], batch_size: int) -> list[list[int]]:
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def train_vae(
    model: VaeModel,
    smiles: list[str],
    qed: np.ndarray | None,
    sa: np.ndarray | None,
    epochs: int,
    seed: int,
    supervised: bool,
    log=None,
) -> VaeTrainingReport:
    """Teacher-forced training with length-bucketed batches and a linear KL
    ramp from 0 to kl_weight_end over the first kl_anneal_frac of steps."""
    config = model.config
    usable = [i for i, s in enumerate(smiles) if len(model.vocab.encode(s)) <= config.max_len]
    report = VaeTrainingReport(seed=seed, epochs=epochs,
                               skipped_too_long=len(smiles) - len(usable))
    smiles = [smiles[i] for i in usable]
    if qed is not None:
        qed = qed[usable]
    if sa is not None:
        sa = sa[usable]
    lengths = [len(model.vocab.encode(s)) for s in smiles]
    buckets = _length_buckets(lengths, config.batch_size)
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate)
    rng = np.random.default_rng(seed)
    total_steps = max(epochs * len(buckets), 1)
    anneal_steps = max(int(total_steps * config.kl_anneal_frac), 1)
    step = 0
    lam = config.property_weight if supervised else 0.0
    with finite_checks(True):
        for epoch in range(epochs):
            order = rng.permutation(len(buckets))
            sums = {"total": 0.0, "recon": 0.0, "kl": 0.0, "qed_mse": 0.0, "sa_mse": 0.0}
            for bucket_pos, bucket_idx in enumerate(order):
                indices = buckets[bucket_idx]
                batch = make_batch(
                    model.vocab,
                    [smiles[i] for i in indices],
                    qed[indices] if qed is not None else None,
                    sa[indices] if sa is not None else None,
                )
                beta = config.kl_weight_end * min(step / anneal_steps, 1.0)
                progress = step / max(total_steps - 1, 1)
                wd = config.input_word_dropout + progress * (
                    config.input_word_dropout_end - config.input_word_dropout
                )
                opt.zero_grad()
                losses = elbo_loss(model, batch, beta=beta, property_weight=lam,
                                   rng=rng, word_dropout=wd)
                value = float(losses["total"].data)
                if not np.isfinite(value):
                    raise Diverged("loss is NaN/Inf", bucket_pos)
                losses["total"].backward()
                opt.step()
                for key in sums:
                    sums[key] += float(losses[key].data)
                step += 1
            n_batches = len(buckets)
            epoch_report = {k: v / n_batches for k, v in sums.items()}
            epoch_report["beta"] = config.kl_weight_end * min(step / anneal_steps, 1.0)
            report.losses.append(epoch_report)
            if log is not None:
                log(epoch, epoch_report)
    return report


def adaptive_pretrain(
    model: VaeModel,
    corpus_a: list[str],
    corpus_b: list[str],
    labels_b: tuple[np.ndarray, np.ndarray],
    epochs_a: int,
    epochs_b: int,
    seed: int,
    log=None,
) -> tuple[VaeTrainingReport, VaeTrainingReport]:
    """Phase 1: unsupervised on corpus_a. Phase 2: continue the same
    parameters with joint property supervision on corpus_b."""
    for smiles in corpus_a + corpus_b:
        for token in tokenize(smiles):
            if token.text not in model.vocab.index:
                raise VocabularyMismatch(
                    f"token {token.text!r} missing from the shared vocabulary"
                )
    report_a = train_vae(model, corpus_a, None, None, epochs_a, seed, supervised=False, log=log)
    qed_b, sa_b = labels_b
    report_b = train_vae(
        model, corpus_b, qed_b, sa_b, epochs_b, seed + 1, supervised=True, log=log
    )
    return report_a, report_b
