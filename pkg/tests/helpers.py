"""Shared deterministic generators used across the test suite."""

from __future__ import annotations

import random
import string

from tandem.templates import BlankKind, TemplateSpec

_LETTERS = string.ascii_letters + "_"
_WORD_CHARS = string.ascii_letters + string.digits

# 'in' is a filter keyword in the minitable grammar; true/false are literals.
_RESERVED = {"in", "true", "false"}


def rand_ident(rng: random.Random) -> str:
    while True:
        name = rng.choice(_LETTERS) + "".join(
            rng.choice(_LETTERS + string.digits) for _ in range(rng.randrange(0, 8))
        )
        if name not in _RESERVED:
            return name


def rand_word(rng: random.Random) -> str:
    return "".join(rng.choice(_WORD_CHARS) for _ in range(rng.randrange(1, 8)))


def rand_colname(rng: random.Random) -> str:
    if rng.random() < 0.5:
        return rand_ident(rng)
    words = [rand_word(rng) for _ in range(rng.randrange(1, 3))]
    return '"' + " ".join(words) + '"'


def rand_number(rng: random.Random) -> str:
    r = rng.random()
    if r < 0.5:
        return str(rng.randrange(-9999, 10000))
    if r < 0.9:
        return f"{rng.uniform(-1000, 1000):.{rng.randrange(1, 4)}f}"
    # pattern edge forms
    return rng.choice([".5", "5.", "-0.25", "0"])


def rand_string(rng: random.Random) -> str:
    words = [rand_word(rng) for _ in range(rng.randrange(0, 3))]
    return '"' + " ".join(words) + '"'


def rand_comparison(rng: random.Random) -> str:
    return rng.choice(["<", "<=", ">", ">=", "==", "!="])


def rand_expr(rng: random.Random) -> str:
    value = rand_number(rng) if rng.random() < 0.6 else rand_string(rng)
    sep = " " if rng.random() < 0.8 else ""
    return rand_comparison(rng) + sep + value


def rand_index(rng: random.Random) -> str:
    return str(rng.randrange(0, 2000))


_GENERATORS = {
    BlankKind.IDENT: rand_ident,
    BlankKind.COLNAME: rand_colname,
    BlankKind.NUMBER: rand_number,
    BlankKind.STRING: rand_string,
    BlankKind.COMPARISON: rand_comparison,
    BlankKind.EXPR: rand_expr,
    BlankKind.INDEX: rand_index,
}


def random_bindings(template: TemplateSpec, rng: random.Random) -> dict[str, str]:
    return {b.name: _GENERATORS[b.kind](rng) for b in template.blanks}
