"""The architecture decision space and its text form.

An architecture is a stack of blocks, eight decisions each, plus a fixed
recurrent head. Text form: comma-separated decision tokens in block order,

    nf<int>,fh<int>,fw<int>,sh<int>,sw<int>,mp<0|1>,bn<0|1>,rnn<0|1>

repeated once per block, optionally followed by a final hd<int> token for
the head BLSTM width (defaults to 32 when absent). Example, two blocks:

    nf16,fh3,fw5,sh1,sw2,mp1,bn0,rnn1,nf8,fh1,fw3,sh2,sw1,mp0,bn1,rnn0,hd32
"""

from __future__ import annotations

from dataclasses import dataclass, fields

DECISION_NAMES = (
    "num_filters",
    "filter_height",
    "filter_width",
    "stride_height",
    "stride_width",
    "has_maxpool",
    "has_batchnorm",
    "has_rnn_block",
)

_TOKEN_PREFIXES = ("nf", "fh", "fw", "sh", "sw", "mp", "bn", "rnn")

DEFAULT_HEAD_WIDTH = 32


@dataclass(frozen=True)
class SearchSpace:
    """Choice lists for each per-block decision."""

    max_blocks: int = 4
    num_filters: tuple = (8, 16, 32, 64)
    filter_height: tuple = (1, 3, 5, 7)
    filter_width: tuple = (1, 3, 5, 7)
    stride_height: tuple = (1, 2)
    stride_width: tuple = (1, 2)
    has_maxpool: tuple = (0, 1)
    has_batchnorm: tuple = (0, 1)
    has_rnn_block: tuple = (0, 1)

    def __post_init__(self):
        if self.max_blocks < 1:
            raise ValueError("max_blocks must be >= 1")
        for name in DECISION_NAMES:
            choices = tuple(getattr(self, name))
            if not choices:
                raise ValueError(f"choice list {name} must be non-empty")
            if len(set(choices)) != len(choices):
                raise ValueError(f"choice list {name} has duplicates")
            object.__setattr__(self, name, choices)

    @property
    def n_points(self):
        per_block = 1
        for name in DECISION_NAMES:
            per_block *= len(getattr(self, name))
        return per_block ** self.max_blocks


def decision_plan(space):
    """The flat (name, choices) sequence the controller walks, block by block."""
    per_block = [(name, getattr(space, name)) for name in DECISION_NAMES]
    return per_block * space.max_blocks


@dataclass(frozen=True)
class BlockSpec:
    num_filters: int
    filter_height: int
    filter_width: int
    stride_height: int
    stride_width: int
    has_maxpool: int
    has_batchnorm: int
    has_rnn_block: int

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{f.name} must be a non-negative int, got {v!r}")
        if min(self.num_filters, self.filter_height, self.filter_width) < 1:
            raise ValueError("filter counts and sizes must be >= 1")
        if self.stride_height < 1 or self.stride_width < 1:
            raise ValueError("strides must be >= 1")
        for flag in ("has_maxpool", "has_batchnorm", "has_rnn_block"):
            if getattr(self, flag) not in (0, 1):
                raise ValueError(f"{flag} must be 0 or 1")


@dataclass(frozen=True)
class ArchSpec:
    blocks: tuple
    head_width: int = DEFAULT_HEAD_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ValueError("need at least one block")
        if not all(isinstance(b, BlockSpec) for b in self.blocks):
            raise ValueError("blocks must be BlockSpec instances")
        if self.head_width < 1:
            raise ValueError("head_width must be >= 1")

    def decisions(self):
        """Flat decision values in controller order."""
        return [getattr(b, name) for b in self.blocks for name in DECISION_NAMES]


def validate_in_space(spec, space):
    if len(spec.blocks) > space.max_blocks:
        raise ValueError(
            f"spec has {len(spec.blocks)} blocks, space allows {space.max_blocks}"
        )
    for i, block in enumerate(spec.blocks):
        for name in DECISION_NAMES:
            value = getattr(block, name)
            if value not in getattr(space, name):
                raise ValueError(
                    f"block {i}: {name}={value} not in choices {getattr(space, name)}"
                )


def format_arch(spec):
    tokens = []
    for block in spec.blocks:
        for prefix, name in zip(_TOKEN_PREFIXES, DECISION_NAMES):
            tokens.append(f"{prefix}{getattr(block, name)}")
    tokens.append(f"hd{spec.head_width}")
    return ",".join(tokens)


def parse_arch(text, space=None):
    """Inverse of format_arch. Raises ValueError naming the bad token."""
    tokens = [t.strip() for t in text.split(",")]
    if tokens == [""]:
        raise ValueError("empty architecture string")

    head_width = DEFAULT_HEAD_WIDTH
    if tokens and tokens[-1].startswith("hd"):
        head_tok = tokens.pop()
        try:
            head_width = int(head_tok[2:])
        except ValueError:
            raise ValueError(f"token {len(tokens) + 1}: bad head token {head_tok!r}") from None

    if not tokens or len(tokens) % len(DECISION_NAMES) != 0:
        raise ValueError(
            f"expected a multiple of {len(DECISION_NAMES)} decision tokens, "
            f"got {len(tokens)}"
        )

    values = []
    for pos, token in enumerate(tokens, start=1):
        prefix = _TOKEN_PREFIXES[(pos - 1) % len(_TOKEN_PREFIXES)]
        if not token.startswith(prefix) or len(token) <= len(prefix):
            raise ValueError(f"token {pos}: expected prefix {prefix!r}, got {token!r}")
        try:
            values.append(int(token[len(prefix) :]))
        except ValueError:
            raise ValueError(f"token {pos}: non-integer value in {token!r}") from None

    n = len(DECISION_NAMES)
    blocks = tuple(
        BlockSpec(*values[i : i + n]) for i in range(0, len(values), n)
    )
    spec = ArchSpec(blocks=blocks, head_width=head_width)
    if space is not None:
        validate_in_space(spec, space)
    return spec
