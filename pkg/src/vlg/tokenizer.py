"""Hybrid discrete/continuous garment tokenization.

A pattern becomes a sequence of structural tokens, each carrying a fixed
7-slot parameter vector (unused slots are 0)::

    PAT_START
      PANEL_START(loop start xy)  PLACEMENT(quat wxyz, translation xyz)
      EDGE_LINE(end xy) | EDGE_CURVE(end xy, control xy)   x edge count
      PANEL_END
    ... per panel ...
    STITCH(panel a, edge a, panel b, edge b)   x stitch count
    PAT_END

Lengths are divided by 100 (cm -> m) so targets stay O(1); quaternions and
stitch indices are not scaled. The last edge of a panel repeats the loop
start on purpose: :func:`decode` uses it as a closure check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ClosureError,
    GrammarError,
    InvalidDecodeError,
    ParamError,
    QuatError,
    RefError,
)
from .pattern import Edge, Panel, SewingPattern, Stitch, canonicalize, validate

__all__ = [
    "PAT_START", "PAT_END", "PANEL_START", "PANEL_END", "PLACEMENT", "EDGE_LINE",
    "EDGE_CURVE", "STITCH", "PAD", "SEP", "N_SPECIAL", "ARITY", "TOKEN_NAMES",
    "P", "SCALE", "TokenStream", "canonicalize", "encode", "decode", "grammar_check",
    "length_of", "arity_mask", "dump_tokens", "panel_names",
]

PAT_START, PAT_END, PANEL_START, PANEL_END, PLACEMENT = 0, 1, 2, 3, 4
EDGE_LINE, EDGE_CURVE, STITCH, PAD, SEP = 5, 6, 7, 8, 9
N_SPECIAL = 10
TOKEN_NAMES = ("PAT_START", "PAT_END", "PANEL_START", "PANEL_END", "PLACEMENT",
               "EDGE_LINE", "EDGE_CURVE", "STITCH", "PAD", "SEP")

P = 7
SCALE = 0.01
ARITY = np.zeros(N_SPECIAL, dtype=np.int64)
ARITY[[PANEL_START, PLACEMENT, EDGE_LINE, EDGE_CURVE, STITCH]] = [2, 7, 2, 4, 4]

MAX_PANELS = 16
MIN_EDGES, MAX_EDGES = 3, 64
CLOSURE_TOL = 0.005  # model units (0.5 cm)
QUAT_RANGE = (0.5, 2.0)


@dataclass
class TokenStream:
    tokens: np.ndarray  # (T,) int64
    params: np.ndarray  # (T, P) float64

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64).reshape(-1)
        self.params = np.asarray(self.params, dtype=np.float64).reshape(-1, P)
        if len(self.tokens) != len(self.params):
            raise ValueError("tokens and params differ in length")

    def __len__(self) -> int:
        return len(self.tokens)


def arity_mask(tokens: np.ndarray) -> np.ndarray:
    """Boolean (..., P) mask of live parameter slots; non-garment ids get none."""
    tokens = np.asarray(tokens)
    ar = np.where((tokens >= 0) & (tokens < N_SPECIAL), ARITY[np.clip(tokens, 0, N_SPECIAL - 1)], 0)
    return np.arange(P) < ar[..., None]


def length_of(p: SewingPattern) -> int:
    return 2 + sum(3 + len(q.edges) for q in p.panels) + len(p.stitches)


def encode(p: SewingPattern) -> TokenStream:
    p = canonicalize(p)
    index = p.panel_index()
    n = length_of(p)
    tokens = np.empty(n, dtype=np.int64)
    params = np.zeros((n, P), dtype=np.float64)
    k = 0

    def emit(tok, values=()):
        nonlocal k
        tokens[k] = tok
        params[k, : len(values)] = values
        k += 1

    emit(PAT_START)
    for panel in p.panels:
        sx, sy = panel.edges[0].start
        emit(PANEL_START, (sx * SCALE, sy * SCALE))
        t = panel.translation
        emit(PLACEMENT, (*panel.rotation, t[0] * SCALE, t[1] * SCALE, t[2] * SCALE))
        for i, e in enumerate(panel.edges):
            ex, ey = panel.edge_end(i)
            if e.control is None:
                emit(EDGE_LINE, (ex * SCALE, ey * SCALE))
            else:
                cx, cy = e.control
                emit(EDGE_CURVE, (ex * SCALE, ey * SCALE, cx * SCALE, cy * SCALE))
        emit(PANEL_END)
    for s in p.stitches:
        emit(STITCH, (index[s.side_a[0]], s.side_a[1], index[s.side_b[0]], s.side_b[1]))
    emit(PAT_END)
    return TokenStream(tokens, params)


# States of the grammar automaton.
_S_BEGIN, _S_TOP, _S_PLACE, _S_EDGES, _S_STITCHES, _S_DONE = range(6)


def grammar_check(s: TokenStream | Sequence[int]) -> Optional[GrammarError]:
    """Run the token grammar automaton.

    Returns None when the stream is accepted, otherwise a :class:`GrammarError`
    (not raised) whose ``index`` is the first offending position.
    """
    tokens = s.tokens if isinstance(s, TokenStream) else s
    state = _S_BEGIN
    panels = edges = 0
    for i, raw in enumerate(tokens):
        tok = int(raw)
        if state == _S_BEGIN:
            if tok != PAT_START:
                return GrammarError("stream must begin with PAT_START", i)
            state = _S_TOP
        elif state == _S_TOP:
            if tok == PANEL_START:
                if panels == MAX_PANELS:
                    return GrammarError(f"more than {MAX_PANELS} panels", i)
                state = _S_PLACE
            elif tok == STITCH:
                state = _S_STITCHES
            elif tok == PAT_END:
                state = _S_DONE
            else:
                return GrammarError(f"unexpected {_name(tok)} between panels", i)
        elif state == _S_PLACE:
            if tok != PLACEMENT:
                return GrammarError(f"expected PLACEMENT, got {_name(tok)}", i)
            state, edges = _S_EDGES, 0
        elif state == _S_EDGES:
            if tok in (EDGE_LINE, EDGE_CURVE):
                if edges == MAX_EDGES:
                    return GrammarError(f"more than {MAX_EDGES} edges in panel", i)
                edges += 1
            elif tok == PANEL_END:
                if edges < MIN_EDGES:
                    return GrammarError(f"panel closed after {edges} edges", i)
                panels += 1
                state = _S_TOP
            else:
                return GrammarError(f"unexpected {_name(tok)} inside panel", i)
        elif state == _S_STITCHES:
            if tok == PAT_END:
                state = _S_DONE
            elif tok != STITCH:
                return GrammarError(f"unexpected {_name(tok)} among stitches", i)
        else:
            return GrammarError("tokens after PAT_END", i)
    if state != _S_DONE:
        return GrammarError("stream ended before PAT_END", len(tokens))
    return None


def _name(tok: int) -> str:
    return TOKEN_NAMES[tok] if 0 <= tok < N_SPECIAL else f"text token {tok}"


def panel_names(n: int) -> list[str]:
    """Generic names that sort in index order (names are not tokenized)."""
    return [f"panel_{i:02d}" for i in range(n)]


def _cm(v) -> float:
    # back to cm, quantized to the 1e-6 cm grid of the file format so that
    # decoding an encoded file pattern reproduces it exactly
    return round(float(v) / SCALE, 6) + 0.0


def decode(s: TokenStream, names: Optional[Sequence[str]] = None) -> SewingPattern:
    """Rebuild a pattern from a token stream, checking everything on the way.

    Panel names are not part of the stream; ``names`` (in canonical order)
    restores them, otherwise generic order-preserving names are used.

    Raises:
        GrammarError, ParamError, ClosureError, QuatError, RefError,
        InvalidDecodeError.
    """
    err = grammar_check(s)
    if err is not None:
        raise err
    tokens, params = s.tokens, s.params
    live = arity_mask(tokens)
    bad = live & ~np.isfinite(params)
    if bad.any():
        raise ParamError("non-finite parameter", int(np.argwhere(bad)[0, 0]))

    raw_panels = []  # (start, quat, trans, edges)
    raw_stitches = []
    i = 1
    while tokens[i] == PANEL_START:
        start = (_cm(params[i, 0]), _cm(params[i, 1]))
        q = params[i + 1, :4]
        norm = float(np.sqrt(np.sum(q * q)))
        if not QUAT_RANGE[0] <= norm <= QUAT_RANGE[1]:
            raise QuatError(f"quaternion norm {norm:.4g} outside {QUAT_RANGE}", i + 1)
        quat = tuple(float(c) / norm for c in q)
        trans = tuple(_cm(c) for c in params[i + 1, 4:7])
        edges = []
        cursor = start
        j = i + 2
        while tokens[j] != PANEL_END:
            end = (_cm(params[j, 0]), _cm(params[j, 1]))
            control = None
            if tokens[j] == EDGE_CURVE:
                control = (_cm(params[j, 2]), _cm(params[j, 3]))
            edges.append(Edge(cursor, control))
            cursor = end
            j += 1
        gap = math.hypot(params[j - 1, 0] - params[i, 0], params[j - 1, 1] - params[i, 1])
        if not gap <= CLOSURE_TOL:
            raise ClosureError(f"loop end misses start by {gap / SCALE:.3f} cm", j - 1)
        raw_panels.append((quat, trans, edges))
        i = j + 1
    n_panels = len(raw_panels)
    if names is None:
        names = panel_names(n_panels)
    elif len(names) != n_panels:
        raise ValueError(f"{len(names)} names for {n_panels} panels")
    while tokens[i] == STITCH:
        ids = np.floor(params[i, :4] + 0.5)
        sides = []
        for pi, ei in ((ids[0], ids[1]), (ids[2], ids[3])):
            if not 0 <= pi < n_panels:
                raise RefError(f"stitch panel index {pi:g} out of range", i)
            n_edges = len(raw_panels[int(pi)][2])
            if not 0 <= ei < n_edges:
                raise RefError(f"stitch edge index {ei:g} out of range", i)
            sides.append((names[int(pi)], int(ei)))
        raw_stitches.append(Stitch(sides[0], sides[1]))
        i += 1
    panels = tuple(
        Panel(name, tuple(edges), quat, trans)
        for name, (quat, trans, edges) in zip(names, raw_panels)
    )
    pattern = SewingPattern(panels, tuple(raw_stitches))
    report = validate(pattern)
    if report.issues:
        raise InvalidDecodeError(str(report.issues[0]))
    return canonicalize(pattern)


def dump_tokens(s: TokenStream) -> str:
    """One token per line: ``NAME p0 .. p6`` with six fractional digits."""
    lines = []
    for tok, row in zip(s.tokens, s.params):
        vals = " ".join("0.000000" if f"{v:.6f}" == "-0.000000" else f"{v:.6f}" for v in row)
        lines.append(f"{_name(int(tok)).replace(' ', '_')} {vals}")
    return "\n".join(lines) + "\n"
