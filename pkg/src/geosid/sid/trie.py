from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence


class TokenTrie:
    """Prefix tree over fixed-length token sequences, for constrained decoding."""

    def __init__(self, sequences: Iterable[Sequence[str]] = ()) -> None:
        self._root: dict[str, dict] = {}
        self._len = 0
        for seq in sequences:
            self.add(seq)

    def add(self, sequence: Sequence[str]) -> None:
        node = self._root
        fresh = False
        for token in sequence:
            if token not in node:
                node[token] = {}
                fresh = True
            node = node[token]
        if fresh:
            self._len += 1

    def _walk(self, prefix: Sequence[str]) -> dict | None:
        node = self._root
        for token in prefix:
            node = node.get(token)
            if node is None:
                return None
        return node

    def next_tokens(self, prefix: Sequence[str] = ()) -> set[str]:
        node = self._walk(prefix)
        return set(node) if node else set()

    def __contains__(self, sequence: Sequence[str]) -> bool:
        node = self._walk(sequence)
        return node is not None and not node

    def __iter__(self) -> Iterator[tuple[str, ...]]:
        stack: list[tuple[tuple[str, ...], dict]] = [((), self._root)]
        while stack:
            path, node = stack.pop()
            if not node:
                if path:
                    yield path
                continue
            for token in sorted(node, reverse=True):
                stack.append((path + (token,), node[token]))

    def __len__(self) -> int:
        return self._len
