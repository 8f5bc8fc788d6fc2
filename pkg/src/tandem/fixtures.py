"""Deterministic demo data, exposed to notebooks as builtin constructors.

Notebooks bootstrap their environment with plain code (``df = census()``,
``img = demo_grid()``) so that replaying a saved document from the top always
reproduces the same values.
"""

from __future__ import annotations

from functools import lru_cache

from .minitable import Grid, Table, register_builtin

_CENSUS_COLUMNS = ("age", "education", "income", "sex", "hours")

_CENSUS_ROWS = (
    (39.0, "Bachelors", "<=50K", "Male", 40.0),
    (50.0, "Doctorate", ">50K", "Male", 60.0),
    (38.0, "HS-grad", "<=50K", "Female", 40.0),
    (53.0, "Prof-school", ">50K", "Male", 55.0),
    (28.0, "Masters", "<=50K", "Female", 40.0),
    (67.0, "Doctorate", ">50K", "Male", 50.0),
    (45.0, "Doctorate", "<=50K", "Female", 40.0),
    (31.0, "Prof-school", ">50K", "Male", 65.0),
    (22.0, "Some-college", "<=50K", "Male", 20.0),
    (59.0, "Prof-school", ">50K", "Male", 48.0),
    (70.0, "HS-grad", "<=50K", "Male", 30.0),
    (36.0, "Masters", ">50K", "Female", 45.0),
    (64.0, "Bachelors", ">50K", "Female", 50.0),
    (25.0, "HS-grad", "<=50K", "Female", 35.0),
)

GRID_SIZE = 850


@lru_cache(maxsize=1)
def census_table() -> Table:
    return Table(_CENSUS_COLUMNS, _CENSUS_ROWS)


@lru_cache(maxsize=1)
def demo_grid() -> Grid:
    n = GRID_SIZE
    return Grid(tuple(tuple(float((i * 31 + j * 17) % 251) for j in range(n)) for i in range(n)))


register_builtin("census", lambda: census_table())
register_builtin("demo_grid", lambda: demo_grid())
