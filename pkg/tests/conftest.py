from __future__ import annotations

import itertools
from functools import lru_cache

import pytest
from hypothesis import settings

from sapcode.superimposed_code import CodeParams, construct_codebook

_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {name}: {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])


settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@lru_cache(maxsize=None)
def book_for(q: int, k: int, K: int, G: int = 1):
    return construct_codebook(CodeParams(q, k, K, G))


def rs_oracle(q: int, k: int, n: int) -> list[tuple[int, ...]]:
    """Outer codewords by Horner evaluation, independent of the library's matrix form.

    Message index m has base-q digits (c_0, ..., c_{k-1}), most significant
    first, read as the polynomial c_0 x^(k-1) + ... + c_{k-1}.  Positions
    0..q-1 evaluate at x = position; position q (when n = q + 1) holds the
    leading coefficient c_0.
    """
    out = []
    for m in range(q**k):
        digits = [(m // q ** (k - 1 - i)) % q for i in range(k)]
        row = []
        for pos in range(n):
            if pos == q:
                row.append(digits[0])
                continue
            acc = 0
            for c in digits:
                acc = (acc * pos + c) % q
            row.append(acc)
        out.append(tuple(row))
    return out


def all_unions(masks, max_order):
    """Brute force: map every OR of 1..max_order distinct codewords to its generating sets."""
    seen: dict[int, list[tuple[int, ...]]] = {}
    for r in range(1, max_order + 1):
        for combo in itertools.combinations(range(len(masks)), r):
            acc = 0
            for i in combo:
                acc |= masks[i]
            seen.setdefault(acc, []).append(combo)
    return seen


@pytest.fixture(scope="session")
def book323():
    return book_for(3, 2, 3)


@pytest.fixture(scope="session")
def book522():
    return book_for(5, 2, 2)
