"""The compositional code ``[g; s; u]`` and its surface grammar.

With the default shape (2 geo tokens, 2 semantic levels) a code renders as
``<m_161><n_17><a_21><b_8><c_0>``. Other shapes draw geo letters from
``GEO_LETTERS`` and semantic letters from ``SEM_LETTERS``; ``c`` is always
the suffix.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

GEO_LETTERS = "mnopqr"
SEM_LETTERS = "abdefgh"
SUFFIX_LETTER = "c"
GEO_TOKEN_MAX = 255


class SidParseError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class SpatialSemanticId:
    g: tuple[int, ...]
    s: tuple[int, ...]
    u: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "g", tuple(int(x) for x in self.g))
        object.__setattr__(self, "s", tuple(int(x) for x in self.s))
        if not self.g or len(self.g) > len(GEO_LETTERS):
            raise ValueError(f"need 1..{len(GEO_LETTERS)} geo tokens, got {len(self.g)}")
        if not self.s or len(self.s) > len(SEM_LETTERS):
            raise ValueError(f"need 1..{len(SEM_LETTERS)} semantic tokens, got {len(self.s)}")
        if any(not 0 <= x <= GEO_TOKEN_MAX for x in self.g):
            raise ValueError(f"geo tokens must be bytes: {self.g}")
        if any(x < 0 for x in self.s) or self.u < 0:
            raise ValueError("semantic and suffix tokens must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.g), len(self.s)

    def tokens(self) -> list[str]:
        out = [f"<{GEO_LETTERS[k]}_{x}>" for k, x in enumerate(self.g)]
        out += [f"<{SEM_LETTERS[k]}_{x}>" for k, x in enumerate(self.s)]
        out.append(f"<{SUFFIX_LETTER}_{self.u}>")
        return out

    def render(self) -> str:
        return "".join(self.tokens())

    def __str__(self) -> str:
        return self.render()


def render_sid(sid: SpatialSemanticId) -> str:
    return sid.render()


@lru_cache(maxsize=None)
def sid_pattern(geo_tokens: int = 2, semantic_levels: int = 2) -> re.Pattern[str]:
    parts = [rf"<{GEO_LETTERS[k]}_(\d+)>" for k in range(geo_tokens)]
    parts += [rf"<{SEM_LETTERS[k]}_(\d+)>" for k in range(semantic_levels)]
    parts.append(rf"<{SUFFIX_LETTER}_(\d+)>")
    return re.compile("".join(parts))


def sid_from_match(
    m: re.Match[str], geo_tokens: int, codebook_size: int | None
) -> SpatialSemanticId:
    values = [int(x) for x in m.groups()]
    g, s, u = values[:geo_tokens], values[geo_tokens:-1], values[-1]
    if any(x > GEO_TOKEN_MAX for x in g):
        raise SidParseError(f"geo token out of range in {m.group(0)!r}")
    if codebook_size is not None and any(x >= codebook_size for x in s):
        raise SidParseError(f"semantic token >= {codebook_size} in {m.group(0)!r}")
    return SpatialSemanticId(tuple(g), tuple(s), u)


def parse_sid(
    text: str,
    geo_tokens: int = 2,
    semantic_levels: int = 2,
    codebook_size: int | None = None,
) -> SpatialSemanticId:
    """Extract the first complete token run from ``text``.

    Surrounding text is ignored. Raises SidParseError when no complete run
    exists or a token value is out of range.
    """
    m = sid_pattern(geo_tokens, semantic_levels).search(text)
    if m is None:
        raise SidParseError(f"no SID token run in {text[:80]!r}")
    return sid_from_match(m, geo_tokens, codebook_size)


def find_sid_runs(text: str, geo_tokens: int = 2, semantic_levels: int = 2) -> list[str]:
    return [m.group(0) for m in sid_pattern(geo_tokens, semantic_levels).finditer(text)]
