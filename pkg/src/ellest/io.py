"""Matrix and descriptor file formats.

Matrices travel as dense row-major CSV, one matrix row per line, full
precision "%.17g". Ellitopes travel as a JSON descriptor
{n, K, tset: {variant, K, p?}, S: [...]} where each S entry is either a path
to a matrix CSV (relative paths resolve against the descriptor's directory)
or an inline row-major nested array. On read, n and tset.K may be omitted;
they are recovered from the S blocks.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .ellitope import Ellitope, TSet

FMT = "%.17g"


def write_matrix(path: str, M: np.ndarray) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w") as fp:
        for row in M:
            fp.write(",".join(FMT % v for v in row) + "\n")


def read_matrix(path: str) -> np.ndarray:
    rows = []
    with open(path) as fp:
        for line in fp:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.array(rows, dtype=float)


def write_ellitope(path: str, ell: Ellitope, inline: bool = True) -> None:
    d = {"n": ell.n, "K": ell.K, "tset": ell.tset.to_json_dict()}
    if inline:
        d["S"] = [Sk.tolist() for Sk in ell.S]
    else:
        base = os.path.splitext(path)[0]
        names = []
        for k in range(ell.K):
            mp = f"{base}_S{k}.csv"
            write_matrix(mp, ell.S[k])
            names.append(os.path.basename(mp))
        d["S"] = names
    with open(path, "w") as fp:
        json.dump(d, fp, indent=1)


def read_ellitope(path: str) -> Ellitope:
    with open(path) as fp:
        d = json.load(fp)
    if "S" not in d or "tset" not in d:
        raise ValueError(f"{path}: descriptor needs 'S' and 'tset' entries")
    S = []
    for entry in d["S"]:
        if isinstance(entry, str):
            p = entry if os.path.isabs(entry) else os.path.join(os.path.dirname(path), entry)
            S.append(read_matrix(p))
        else:
            S.append(np.array(entry, dtype=float))
    if not S:
        raise ValueError(f"{path}: descriptor lists no S blocks")
    # n and tset.K are redundant with S; hand-written files may omit them
    td = dict(d["tset"])
    td.setdefault("K", len(S))
    tset = TSet.from_json_dict(td)
    n = int(d.get("n", np.atleast_2d(S[0]).shape[0]))
    return Ellitope(n, np.array(S), tset)
