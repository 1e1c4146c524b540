"""Reading panels and model specifications from disk."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, SpecError
from .graph import Network, Panel
from .saom import SaomEffect
from .terms import COVARIATE, KINDS, Binding, TermSpec

SPEC_DIR = Path(__file__).with_name("specs")
TERM_KEYS = {"term", "decay", "attr", "binding", "source_wave", "transform"}
EFFECT_KEYS = {"effect", "attr", "decay"}


def _split(line: str) -> list[str]:
    return line.replace(",", " ").split()


def read_matrix(path: Path) -> np.ndarray:
    """Headerless 0/1 matrix, whitespace- or comma-separated."""
    path = Path(path)
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cells = _split(line)
            row = []
            for col, c in enumerate(cells):
                try:
                    row.append(float(c))
                except ValueError:
                    raise DataError(f"{path}: non-numeric entry {c!r} at row {len(rows)}, col {col}") from None
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: rows have differing lengths {sorted(widths)}")
    mat = np.array(rows)
    if mat.shape[0] != mat.shape[1]:
        raise DataError(f"{path}: matrix is {mat.shape[0]}x{mat.shape[1]}, expected square")
    return mat


def _check_adjacency(path: Path, mat: np.ndarray) -> np.ndarray:
    bad = np.argwhere((mat != 0) & (mat != 1))
    if bad.size:
        r, c = bad[0]
        raise DataError(f"{path}: non-binary entry {mat[r, c]:g} at row {r}, col {c}")
    loops = np.nonzero(np.diag(mat))[0]
    if loops.size:
        raise DataError(f"{path}: self-loop at row {loops[0]}, col {loops[0]}")
    return mat.astype(np.uint8)


def _parse_column(values: list[str]) -> np.ndarray:
    try:
        return np.array([float(v) for v in values])
    except ValueError:
        return np.array(values, dtype=str)


def read_covariates(path: Path, n: int, n_waves: int):
    """Node covariates from a CSV with a header row and one row per node.

    A column ``name@w`` holds the value of ``name`` at wave ``w``; all waves
    must then be present. A column whose cells are file paths declared as
    ``name=path`` in the header is read as a dyadic matrix instead.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"{path}: empty covariate file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    node, dyad, per_wave = {}, {}, {}
    for col, name in enumerate(header):
        if "=" in name:
            key, rel = name.split("=", 1)
            mpath = (path.parent / rel).resolve()
            mat = read_matrix(mpath)
            if mat.shape != (n, n):
                raise DataError(f"{mpath}: dyadic covariate is {mat.shape[0]}x{mat.shape[1]}, expected {n}x{n}")
            dyad[key] = mat
            continue
        if len(body) != n:
            raise DataError(f"{path}: {len(body)} data rows, expected {n} (one per node)")
        values = []
        for r, row in enumerate(body):
            if col >= len(row):
                raise DataError(f"{path}: missing value at row {r}, col {col}")
            values.append(row[col].strip())
        vals = _parse_column(values)
        if "@" in name:
            key, w = name.split("@", 1)
            try:
                per_wave.setdefault(key, {})[int(w)] = vals
            except ValueError:
                raise DataError(f"{path}: bad wave index in column {name!r}") from None
        else:
            node[name] = vals
    for key, by_wave in per_wave.items():
        if sorted(by_wave) != list(range(n_waves)):
            raise DataError(f"{path}: per-wave covariate {key!r} needs columns {key}@0..{key}@{n_waves - 1}")
        node[key] = np.vstack([by_wave[w] for w in range(n_waves)])
    return node, dyad


def load_panel(paths: Sequence[Path], covariate_paths: Sequence[Path] = ()) -> Panel:
    """Panel from one adjacency file per wave (in temporal order) plus covariate CSVs."""
    if not paths:
        raise DataError("no wave files given")
    waves, n = [], None
    for p in paths:
        mat = _check_adjacency(Path(p), read_matrix(Path(p)))
        if n is None:
            n = mat.shape[0]
        elif mat.shape[0] != n:
            raise DataError(f"{p}: dimension mismatch, {mat.shape[0]}x{mat.shape[0]} but earlier waves are {n}x{n}")
        waves.append(Network(mat))
    node, dyad = {}, {}
    for cp in covariate_paths:
        nd, dd = read_covariates(Path(cp), n, len(waves))
        for name in list(nd) + list(dd):
            if name in node or name in dyad:
                raise DataError(f"{cp}: covariate {name!r} defined twice")
        node.update(nd)
        dyad.update(dd)
    return Panel(waves, node, dyad)


@dataclass
class ModelSpec:
    terms: list[TermSpec] = field(default_factory=list)
    saom_effects: list[SaomEffect] = field(default_factory=list)

    @property
    def derived(self) -> dict:
        """Attributes the spec declares as transforms of observed waves."""
        return {t.attr: t.transform for t in self.terms if t.transform}


def _term(obj, where: str) -> TermSpec:
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - TERM_KEYS
    if unknown:
        raise SpecError(f"{where}: unknown keys {sorted(unknown)}")
    kind = obj.get("term")
    if kind not in KINDS:
        raise SpecError(f"{where}: unknown term {kind!r}; valid kinds: {', '.join(KINDS)}")
    binding = obj.get("binding")
    if binding is None:
        if kind in COVARIATE:
            raise SpecError(f"{where}: covariate term {kind!r} needs a binding (Lagged or Contemporaneous)")
        binding = Binding.LAGGED if kind == "memory_stability" else Binding.ENDOGENOUS
    try:
        binding = Binding(binding)
    except ValueError:
        raise SpecError(f"{where}: unknown binding {binding!r}; expected one of {[b.value for b in Binding]}") from None
    sw = obj.get("source_wave")
    if sw is not None and (not isinstance(sw, int) or isinstance(sw, bool) or sw < 0):
        raise SpecError(f"{where}: source_wave must be a nonnegative integer")
    decay = obj.get("decay")
    if decay is not None and not isinstance(decay, (int, float)):
        raise SpecError(f"{where}: decay must be a number")
    try:
        return TermSpec(kind, decay=None if decay is None else float(decay), attr=obj.get("attr"),
                        binding=binding, source_wave=sw, transform=obj.get("transform"))
    except SpecError as e:
        raise SpecError(f"{where}: {e}") from None


def _effect(obj, where: str) -> SaomEffect:
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - EFFECT_KEYS
    if unknown:
        raise SpecError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        decay = obj.get("decay")
        return SaomEffect(obj.get("effect"), obj.get("attr"), None if decay is None else float(decay))
    except SpecError as e:
        raise SpecError(f"{where}: {e}") from None


def parse_model_spec_data(doc, source: str = "<spec>") -> ModelSpec:
    """Validate a decoded spec document.

    Accepts a bare array of term objects, or an object with ``terms`` and/or
    ``saom_effects`` arrays.
    """
    if isinstance(doc, list):
        doc = {"terms": doc}
    if not isinstance(doc, dict):
        raise SpecError(f"{source}: expected an array of terms or an object")
    unknown = set(doc) - {"terms", "saom_effects"}
    if unknown:
        raise SpecError(f"{source}: unknown top-level keys {sorted(unknown)}")
    terms_raw, eff_raw = doc.get("terms", []), doc.get("saom_effects", [])
    if not isinstance(terms_raw, list) or not isinstance(eff_raw, list):
        raise SpecError(f"{source}: 'terms' and 'saom_effects' must be arrays")
    terms = [_term(o, f"{source}: term {i}") for i, o in enumerate(terms_raw)]
    effects = [_effect(o, f"{source}: effect {i}") for i, o in enumerate(eff_raw)]
    transforms = {}
    for t in terms:
        if t.transform:
            if transforms.setdefault(t.attr, t.transform) != t.transform:
                raise SpecError(f"{source}: attr {t.attr!r} declared with two transforms")
    return ModelSpec(terms, effects)


def parse_model_spec(path: Path) -> ModelSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SpecError(f"{path}: invalid JSON ({e})") from None
    return parse_model_spec_data(doc, str(path))


def builtin_spec(name: str) -> Path:
    """Path of a bundled spec file (``flawed_lc``, ``corrected`` or ``saom_table1``)."""
    p = SPEC_DIR / (name if name.endswith(".json") else name + ".json")
    if not p.exists():
        raise FileNotFoundError(f"no bundled spec {name!r}")
    return p


def write_matrix(path: Path, mat: np.ndarray) -> None:
    np.savetxt(path, np.asarray(mat), fmt="%d")
