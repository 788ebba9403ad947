"""Sender/receiver/flexible agents and the reference-game round structure."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn, world


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class VisionModule:
    """CNN classifier: conv(32) + pool + conv(32) + fc(16) + fc(16) + softmax(64).

    The 16-dim activations of the second fully connected layer serve as the
    object representation.
    """

    REP_DIM = 16
    CHANNELS = 32

    def __init__(self, height: int = 16, width: int = 16, seed: int = 0, prefix: str = "vision"):
        self.height = height
        self.width = width
        rng = np.random.default_rng(seed)
        c = self.CHANNELS
        h1, w1 = height - 2, width - 2
        h2, w2 = h1 // 2, w1 // 2
        h3, w3 = h2 - 2, w2 - 2
        if h3 < 1 or w3 < 1:
            raise ValueError(f"image size {height}x{width} too small for the CNN")
        self.flat_dim = h3 * w3 * c
        P = nn.Parameter
        self.conv1 = P(_uniform_init(rng, (3, 3, 3, c), 27), f"{prefix}.conv1")
        self.conv2 = P(_uniform_init(rng, (3, 3, c, c), 9 * c), f"{prefix}.conv2")
        self.fc1_w = P(_uniform_init(rng, (self.flat_dim, 16), self.flat_dim), f"{prefix}.fc1_w")
        self.fc1_b = P(np.zeros(16), f"{prefix}.fc1_b")
        self.fc2_w = P(_uniform_init(rng, (16, 16), 16), f"{prefix}.fc2_w")
        self.fc2_b = P(np.zeros(16), f"{prefix}.fc2_b")
        self.head_w = P(_uniform_init(rng, (16, world.N_CLASSES), 16), f"{prefix}.head_w")
        self.head_b = P(np.zeros(world.N_CLASSES), f"{prefix}.head_b")

    def parameters(self) -> list[nn.Parameter]:
        return [
            self.conv1, self.conv2,
            self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b,
            self.head_w, self.head_b,
        ]

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.trainable = flag

    def forward(self, images) -> tuple[nn.Tensor, nn.Tensor]:
        """Returns (representations (B, 16), class probabilities (B, 64))."""
        x = nn.as_tensor(images)
        h = nn.relu(nn.conv2d(x, self.conv1))
        h = nn.maxpool2x2(h)
        h = nn.relu(nn.conv2d(h, self.conv2))
        h = nn.reshape(h, (-1, self.flat_dim))
        h = nn.relu(nn.dense(h, self.fc1_w, self.fc1_b))
        rep = nn.relu(nn.dense(h, self.fc2_w, self.fc2_b))
        probs = nn.softmax(nn.dense(rep, self.head_w, self.head_b))
        return rep, probs

    def representations(self, images: np.ndarray) -> np.ndarray:
        rep, _ = self.forward(images)
        return rep.data


def _gru_params(rng: np.random.Generator, in_dim: int, hidden: int, prefix: str) -> dict:
    P = nn.Parameter
    params = {}
    for gate in ("z", "r", "h"):
        params[f"W_{gate}"] = P(_uniform_init(rng, (in_dim, hidden), in_dim), f"{prefix}.W_{gate}")
        params[f"U_{gate}"] = P(_uniform_init(rng, (hidden, hidden), hidden), f"{prefix}.U_{gate}")
        params[f"b_{gate}"] = P(np.zeros(hidden), f"{prefix}.b_{gate}")
    return params


class _AgentBase:
    HIDDEN = 128

    def language_parameters(self) -> list[nn.Parameter]:
        raise NotImplementedError

    def parameters(self) -> list[nn.Parameter]:
        return self.vision.parameters() + self.language_parameters()

    def save(self, path: str) -> None:
        nn.save_parameters(self.parameters(), path)

    def load(self, path: str) -> None:
        nn.assign_parameters(self.parameters(), nn.load_parameters(path))


class SenderAgent(_AgentBase):
    """Vision module + message-generating language module."""

    role = "sender"

    def __init__(self, vocab_size: int = 4, height: int = 16, width: int = 16, seed: int = 0):
        self.vocab_size = vocab_size
        rng = np.random.default_rng(seed)
        self.vision = VisionModule(height, width, seed=seed, prefix="vision")
        n = self.HIDDEN
        P = nn.Parameter
        self.f1_w = P(_uniform_init(rng, (VisionModule.REP_DIM, n), VisionModule.REP_DIM), "f1_w")
        self.f1_b = P(np.zeros(n), "f1_b")
        self.embedding = P(rng.normal(0.0, 0.1, size=(vocab_size, n)), "embedding")
        self.gru = _gru_params(rng, n, n, "gru")
        self.f2_w = P(_uniform_init(rng, (n, vocab_size), n), "f2_w")
        self.f2_b = P(np.zeros(vocab_size), "f2_b")

    def language_parameters(self) -> list[nn.Parameter]:
        return [self.f1_w, self.f1_b, self.embedding, self.f2_w, self.f2_b] + list(
            self.gru.values()
        )


class ReceiverAgent(_AgentBase):
    """Vision module + message-interpreting language module."""

    role = "receiver"

    def __init__(self, vocab_size: int = 4, height: int = 16, width: int = 16, seed: int = 0):
        self.vocab_size = vocab_size
        rng = np.random.default_rng(seed)
        self.vision = VisionModule(height, width, seed=seed, prefix="vision")
        n = self.HIDDEN
        P = nn.Parameter
        self.f1_w = P(_uniform_init(rng, (VisionModule.REP_DIM, n), VisionModule.REP_DIM), "f1_w")
        self.f1_b = P(np.zeros(n), "f1_b")
        self.embedding = P(rng.normal(0.0, 0.1, size=(vocab_size, n)), "embedding")
        self.gru = _gru_params(rng, n, n, "gru")

    def language_parameters(self) -> list[nn.Parameter]:
        return [self.f1_w, self.f1_b, self.embedding] + list(self.gru.values())


class FlexibleAgent(SenderAgent):
    """Sender-architecture parameter set usable in either role.

    In receiver mode the GRU hidden state starts at zero and the
    symbol-output layer f2 is unused.
    """

    role = "flexible"


@dataclass(frozen=True)
class GameConfig:
    vocab_size: int = 4
    message_length: int = 3
    distractors: int = 2
    relevance_mask: tuple[str, ...] = world.ATTRIBUTES

    def __post_init__(self):
        if self.vocab_size < 2 or self.message_length < 1 or self.distractors < 1:
            raise ValueError("need |V| >= 2, L >= 1, k >= 1")
        if not self.relevance_mask or any(
            a not in world.ATTRIBUTES for a in self.relevance_mask
        ):
            raise ValueError(f"bad relevance mask {self.relevance_mask}")

    @property
    def irrelevant(self) -> tuple[str, ...]:
        return tuple(a for a in world.ATTRIBUTES if a not in self.relevance_mask)


@dataclass
class GameRound:
    """One reference-game round, referring to dataset item indices."""

    target_class: int
    sender_item: int
    receiver_target_class: int
    candidate_items: np.ndarray  # (k+1,)
    candidate_classes: np.ndarray  # (k+1,)
    target_pos: int


def relevant_projection(class_id: int, config: GameConfig) -> tuple[int, ...]:
    """Values of the relevant attributes for a class."""
    return tuple(world.attribute_value(class_id, a) for a in config.relevance_mask)


_MATCH_CACHE: dict = {}


def _classes_matching(class_id: int, config: GameConfig) -> np.ndarray:
    """Classes agreeing with ``class_id`` on every relevant attribute."""
    key = (config.relevance_mask, class_id)
    if key not in _MATCH_CACHE:
        table = world.class_attribute_table()
        mask = np.ones(world.N_CLASSES, dtype=bool)
        for a in config.relevance_mask:
            col = world.ATTRIBUTES.index(a)
            mask &= table[:, col] == world.attribute_value(class_id, a)
        matching = np.flatnonzero(mask)
        others = np.setdiff1d(np.arange(world.N_CLASSES), matching, assume_unique=True)
        _MATCH_CACHE[key] = (matching, others)
    return _MATCH_CACHE[key][0]


def _classes_differing(class_id: int, config: GameConfig) -> np.ndarray:
    """Classes differing from ``class_id`` in at least one relevant attribute."""
    _classes_matching(class_id, config)
    return _MATCH_CACHE[(config.relevance_mask, class_id)][1]


def sample_round(
    dataset: world.Dataset,
    config: GameConfig,
    rng: np.random.Generator,
    split: str = "train",
    by_class: list[np.ndarray] | None = None,
    target_class: int | None = None,
    sender_item: int | None = None,
) -> GameRound:
    """Draw one round: target, sender/receiver instances, distractors, slot.

    ``by_class`` may carry precomputed per-class item indices for the split;
    ``sender_item`` may pin the sender's image to a specific dataset item.
    """
    if by_class is None:
        by_class = dataset.indices_by_class(split)
    if sender_item is not None:
        target_class = int(dataset.class_ids[sender_item])
    elif target_class is None:
        target_class = int(rng.integers(world.N_CLASSES))
    if sender_item is None:
        sender_item = int(rng.choice(by_class[target_class]))

    matching = _classes_matching(target_class, config)
    receiver_target_class = int(rng.choice(matching))

    valid = _classes_differing(target_class, config)
    distractor_classes = rng.choice(valid, size=config.distractors, replace=False)

    target_pos = int(rng.integers(config.distractors + 1))
    candidate_classes = np.empty(config.distractors + 1, dtype=np.int64)
    candidate_items = np.empty(config.distractors + 1, dtype=np.int64)
    d = 0
    for pos in range(config.distractors + 1):
        if pos == target_pos:
            cls = receiver_target_class
        else:
            cls = int(distractor_classes[d])
            d += 1
        candidate_classes[pos] = cls
        candidate_items[pos] = int(rng.choice(by_class[cls]))
    return GameRound(
        target_class=target_class,
        sender_item=sender_item,
        receiver_target_class=receiver_target_class,
        candidate_items=candidate_items,
        candidate_classes=candidate_classes,
        target_pos=target_pos,
    )


def reward(selection_class: int, round_: GameRound, config: GameConfig) -> int:
    """1 iff the selected class matches the target on all relevant attributes."""
    return int(
        relevant_projection(selection_class, config)
        == relevant_projection(round_.target_class, config)
    )


@dataclass
class SenderRollout:
    messages: np.ndarray  # (B, L) int
    step_log_probs: list  # L Tensors of shape (B,)
    step_entropies: list  # L Tensors of shape (B,) in nats
    step_probs: np.ndarray = field(default=None, repr=False)  # (B, L, |V|)

    def total_log_prob(self) -> nn.Tensor:
        out = self.step_log_probs[0]
        for t in self.step_log_probs[1:]:
            out = nn.add(out, t)
        return out

    def total_entropy(self) -> nn.Tensor:
        out = self.step_entropies[0]
        for t in self.step_entropies[1:]:
            out = nn.add(out, t)
        return out


@dataclass
class ReceiverRollout:
    selections: np.ndarray  # (B,) candidate slots
    log_prob: nn.Tensor  # (B,)
    entropy: nn.Tensor  # (B,) in nats
    probs: np.ndarray  # (B, k+1)


def sender_forward(
    agent: SenderAgent,
    images=None,
    mode: str = "sample",
    rng: np.random.Generator | None = None,
    message_length: int = 3,
    reps=None,
    force_messages: np.ndarray | None = None,
) -> SenderRollout:
    """Generate messages symbol by symbol.

    The GRU hidden state is initialized from f1(v(image)); the first input
    is a zero vector of embedding dimensionality. ``reps`` may supply
    precomputed visual representations instead of ``images``;
    ``force_messages`` teacher-forces the symbol sequence (for enumerating
    the message distribution).
    """
    if reps is None:
        rep, _ = agent.vision.forward(images)
    else:
        rep = nn.as_tensor(reps)
    batch = rep.data.shape[0]
    h = nn.dense(rep, agent.f1_w, agent.f1_b)
    x = nn.Tensor(np.zeros((batch, agent.HIDDEN)))
    messages = np.empty((batch, message_length), dtype=np.int64)
    step_log_probs, step_entropies, all_probs = [], [], []
    for t in range(message_length):
        h = nn.gru_step(x, h, agent.gru)
        probs = nn.softmax(nn.dense(h, agent.f2_w, agent.f2_b))
        if force_messages is not None:
            symbols = np.asarray(force_messages[:, t], dtype=np.int64)
        elif mode == "greedy":
            symbols = nn.argmax(probs.data)
        else:
            symbols = nn.sample_categorical(probs.data, rng)
        messages[:, t] = symbols
        step_log_probs.append(nn.log(nn.gather_rows(probs, symbols)))
        step_entropies.append(nn.entropy_of(probs))
        all_probs.append(probs.data)
        x = nn.embedding_lookup(agent.embedding, symbols)
    return SenderRollout(messages, step_log_probs, step_entropies, np.stack(all_probs, axis=1))


def receiver_forward(
    agent,
    messages: np.ndarray,
    candidate_images=None,
    mode: str = "sample",
    rng: np.random.Generator | None = None,
    cand_reps=None,
    force_selections: np.ndarray | None = None,
) -> ReceiverRollout:
    """Interpret a message and select among candidates.

    The GRU starts at zero, consumes the message embeddings, and the
    selection policy is the softmax of dot products between candidate image
    embeddings f1(v(i_j)) and the final hidden state. Works for both
    ReceiverAgent and FlexibleAgent (whose f2 stays unused here).
    """
    messages = np.asarray(messages, dtype=np.int64)
    batch, length = messages.shape
    if cand_reps is None:
        flat = candidate_images.reshape((-1,) + candidate_images.shape[2:])
        rep, _ = agent.vision.forward(flat)
    else:
        rep = nn.as_tensor(cand_reps)  # flat (B*(k+1), rep_dim)
    emb = nn.dense(rep, agent.f1_w, agent.f1_b)
    k1 = emb.data.shape[0] // batch
    emb = nn.reshape(emb, (batch, k1, agent.HIDDEN))

    h = nn.Tensor(np.zeros((batch, agent.HIDDEN)))
    for t in range(length):
        x = nn.embedding_lookup(agent.embedding, messages[:, t])
        h = nn.gru_step(x, h, agent.gru)
    scores = nn.batched_dot(emb, h)
    probs = nn.softmax(scores)
    if force_selections is not None:
        selections = np.asarray(force_selections, dtype=np.int64)
    elif mode == "greedy":
        selections = nn.argmax(probs.data)
    else:
        selections = nn.sample_categorical(probs.data, rng)
    selections = np.atleast_1d(selections)
    log_prob = nn.log(nn.gather_rows(probs, selections))
    entropy = nn.entropy_of(probs)
    return ReceiverRollout(selections, log_prob, entropy, probs.data)
