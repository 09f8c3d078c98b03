#!/usr/bin/env python3
"""
Grid Case Data Model

Static network data (buses, branches, generators, loads) in per-unit, the
MATPOWER-subset and native JSON case readers, derived branch admittances, and
case validation.

Usage:
    python grid_case.py cases/case14_linear.m          # parse, validate, print census
    python grid_case.py cases/case2.m --to-native out.json
"""

import os
import re
import sys
import json
import math
import cmath
import hashlib
import logging
import argparse
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple, Any

import numpy as np
import scipy.sparse as sps

logger = logging.getLogger(__name__)

NATIVE_FORMAT = 'dc2ac-case'
NATIVE_VERSION = 1

DEFAULT_DVA = math.pi / 6       # angle-difference bound when the case has none
UNLIMITED_RATING_MVA = 9900.0   # MATPOWER writes rateA=0 for "no limit"
SHED_COST_FACTOR = 100.0

# MATPOWER column positions (0-based) for the columns this reader consumes
BUS_COLUMNS = 13
GEN_COLUMNS = 10
BRANCH_COLUMNS = 11


class CaseSyntaxError(ValueError):
    """Malformed case text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class CaseValidationError(ValueError):
    """Semantically invalid case; carries element kind and 1-based index."""

    def __init__(self, message: str, element: Optional[str] = None, index: Optional[int] = None):
        self.element = element
        self.index = index
        prefix = f"{element} {index}: " if element is not None and index is not None else ''
        super().__init__(f"{prefix}{message}")


@dataclass(frozen=True)
class PiAdmittance:
    """Pi-model branch admittance entries (p.u.)."""
    gff: float
    bff: float
    gft: float
    bft: float
    gtf: float
    btf: float
    gtt: float
    btt: float


@dataclass(frozen=True)
class Bus:
    bus_id: int
    kind: int            # 1 = PQ, 2 = PV, 3 = reference
    gs: float
    bs: float
    vm_min: float
    vm_max: float
    vm_set: float = 1.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float
    s_max: float
    tap: float = 1.0
    shift: float = 0.0
    dva_min: float = -DEFAULT_DVA
    dva_max: float = DEFAULT_DVA
    pi: PiAdmittance = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'pi', derive_pi_admittance(self))


@dataclass(frozen=True)
class Generator:
    bus: int
    pg_min: float
    pg_max: float
    qg_min: float
    qg_max: float
    cost: float
    pg_set: float = 0.0
    qg_set: float = 0.0
    vg_set: float = 1.0


@dataclass(frozen=True)
class Load:
    bus: int
    pd_ref: float
    qd_ref: float


@dataclass(frozen=True)
class GridCase:
    """Immutable network case; every quantity in p.u. on base_mva."""
    name: str
    base_mva: float
    buses: Tuple[Bus, ...]
    branches: Tuple[Branch, ...]
    generators: Tuple[Generator, ...]
    loads: Tuple[Load, ...]
    ref_bus: int
    shed_cost: float

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_load(self) -> int:
        return len(self.loads)

    @cached_property
    def from_idx(self) -> np.ndarray:
        return np.array([br.from_bus for br in self.branches], dtype=int)

    @cached_property
    def to_idx(self) -> np.ndarray:
        return np.array([br.to_bus for br in self.branches], dtype=int)

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return np.array([g.bus for g in self.generators], dtype=int)

    @cached_property
    def load_bus(self) -> np.ndarray:
        return np.array([ld.bus for ld in self.loads], dtype=int)

    @cached_property
    def pd_ref(self) -> np.ndarray:
        return np.array([ld.pd_ref for ld in self.loads], dtype=float)

    @cached_property
    def qd_ref(self) -> np.ndarray:
        return np.array([ld.qd_ref for ld in self.loads], dtype=float)

    @cached_property
    def gs(self) -> np.ndarray:
        return np.array([b.gs for b in self.buses], dtype=float)

    @cached_property
    def bs(self) -> np.ndarray:
        return np.array([b.bs for b in self.buses], dtype=float)

    @cached_property
    def b_dc(self) -> np.ndarray:
        """Nominal DC susceptances b_e (negative for inductive branches)."""
        return np.array([dc_susceptance(br) for br in self.branches], dtype=float)

    @cached_property
    def cost(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators], dtype=float)

    @cached_property
    def gen_incidence(self) -> sps.csr_matrix:
        """Bus-by-generator incidence Cg."""
        return sps.csr_matrix(
            (np.ones(self.n_gen), (self.gen_bus, np.arange(self.n_gen))),
            shape=(self.n_bus, self.n_gen))

    @cached_property
    def load_incidence(self) -> sps.csr_matrix:
        """Bus-by-load incidence Cl."""
        return sps.csr_matrix(
            (np.ones(self.n_load), (self.load_bus, np.arange(self.n_load))),
            shape=(self.n_bus, self.n_load))

    @cached_property
    def admittance(self) -> Tuple[sps.csr_matrix, sps.csr_matrix, sps.csr_matrix]:
        """(Ybus, Yf, Yt) complex admittance matrices including bus shunts."""
        return build_admittance_matrices(self)

    def bus_loads(self, pd: Optional[np.ndarray] = None,
                  qd: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Aggregate per-load demands onto buses; reference loads by default."""
        pd = self.pd_ref if pd is None else np.asarray(pd, dtype=float)
        qd = self.qd_ref if qd is None else np.asarray(qd, dtype=float)
        return self.load_incidence @ pd, self.load_incidence @ qd


def derive_pi_admittance(branch: Branch) -> PiAdmittance:
    """Standard Pi-model admittances of a branch with off-nominal tap and phase shift."""
    if branch.r == 0.0 and branch.x == 0.0:
        raise ValueError("degenerate branch impedance (r = x = 0)")
    if branch.tap <= 0.0:
        raise ValueError(f"tap ratio must be positive, got {branch.tap}")

    ys = 1.0 / complex(branch.r, branch.x)
    half_charge = 1j * branch.b_charge / 2.0
    yff = (ys + half_charge) / branch.tap ** 2
    yft = -ys / (branch.tap * cmath.exp(-1j * branch.shift))
    ytf = -ys / (branch.tap * cmath.exp(1j * branch.shift))
    ytt = ys + half_charge
    return PiAdmittance(
        gff=yff.real, bff=yff.imag,
        gft=yft.real, bft=yft.imag,
        gtf=ytf.real, btf=ytf.imag,
        gtt=ytt.real, btt=ytt.imag,
    )


def dc_susceptance(branch: Branch) -> float:
    """Series susceptance Im(1/(r + jx)) / tap used by the DC flow equation."""
    if branch.x == 0.0:
        raise ValueError("DC susceptance undefined for zero reactance")
    return (1.0 / complex(branch.r, branch.x)).imag / branch.tap


def build_admittance_matrices(case: GridCase) -> Tuple[sps.csr_matrix, sps.csr_matrix, sps.csr_matrix]:
    """Assemble Ybus, Yf and Yt from the branch Pi-models and bus shunts."""
    nl, nb = case.n_branch, case.n_bus
    rows = np.arange(nl)
    yff = np.array([br.pi.gff + 1j * br.pi.bff for br in case.branches], dtype=complex)
    yft = np.array([br.pi.gft + 1j * br.pi.bft for br in case.branches], dtype=complex)
    ytf = np.array([br.pi.gtf + 1j * br.pi.btf for br in case.branches], dtype=complex)
    ytt = np.array([br.pi.gtt + 1j * br.pi.btt for br in case.branches], dtype=complex)

    f, t = case.from_idx, case.to_idx
    yf = sps.csr_matrix((np.r_[yff, yft], (np.r_[rows, rows], np.r_[f, t])), shape=(nl, nb))
    yt = sps.csr_matrix((np.r_[ytf, ytt], (np.r_[rows, rows], np.r_[f, t])), shape=(nl, nb))
    cf = sps.csr_matrix((np.ones(nl), (rows, f)), shape=(nl, nb))
    ct = sps.csr_matrix((np.ones(nl), (rows, t)), shape=(nl, nb))
    ysh = sps.diags(case.gs + 1j * case.bs)
    ybus = (cf.T @ yf + ct.T @ yt + ysh).tocsr()
    return ybus, yf, yt


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_case(case: GridCase) -> GridCase:
    """Check every GridCase invariant; raise CaseValidationError on the first violation."""
    if not case.base_mva > 0:
        raise CaseValidationError(f"base_mva must be positive, got {case.base_mva}")
    nb = case.n_bus
    if nb == 0:
        raise CaseValidationError("case has no buses")
    refs = [i for i, b in enumerate(case.buses) if b.kind == 3]
    if len(refs) != 1:
        raise CaseValidationError(f"exactly one reference bus required, found {len(refs)}")
    if not 0 <= case.ref_bus < nb or case.ref_bus != refs[0]:
        raise CaseValidationError(f"ref_bus {case.ref_bus} does not match the reference bus")
    if not case.shed_cost > 0:
        raise CaseValidationError(f"shed_cost must be positive, got {case.shed_cost}")

    for i, bus in enumerate(case.buses, 1):
        _check_finite('bus', i, bus.gs, bus.bs, bus.vm_min, bus.vm_max, bus.vm_set)
        if not bus.vm_min > 0:
            raise CaseValidationError(f"vm_min must be positive, got {bus.vm_min}", 'bus', i)
        if bus.vm_min > bus.vm_max:
            raise CaseValidationError(f"vm_min {bus.vm_min} exceeds vm_max {bus.vm_max}", 'bus', i)

    for i, br in enumerate(case.branches, 1):
        _check_finite('branch', i, br.r, br.x, br.b_charge, br.s_max, br.tap, br.shift,
                      br.dva_min, br.dva_max)
        for end in (br.from_bus, br.to_bus):
            if not 0 <= end < nb:
                raise CaseValidationError(f"endpoint bus index {end} does not exist", 'branch', i)
        if br.x == 0.0:
            raise CaseValidationError("zero reactance", 'branch', i)
        if not br.tap > 0:
            raise CaseValidationError(f"tap must be positive, got {br.tap}", 'branch', i)
        if not br.s_max > 0:
            raise CaseValidationError(f"thermal limit must be positive, got {br.s_max}", 'branch', i)
        if not br.dva_min <= 0 <= br.dva_max:
            raise CaseValidationError(
                f"angle bounds [{br.dva_min}, {br.dva_max}] must bracket zero", 'branch', i)

    for i, gen in enumerate(case.generators, 1):
        _check_finite('gen', i, gen.pg_min, gen.pg_max, gen.qg_min, gen.qg_max, gen.cost)
        if not 0 <= gen.bus < nb:
            raise CaseValidationError(f"bus index {gen.bus} does not exist", 'gen', i)
        if gen.pg_min > gen.pg_max:
            raise CaseValidationError(f"pg_min {gen.pg_min} exceeds pg_max {gen.pg_max}", 'gen', i)
        if gen.qg_min > gen.qg_max:
            raise CaseValidationError(f"qg_min {gen.qg_min} exceeds qg_max {gen.qg_max}", 'gen', i)

    for i, ld in enumerate(case.loads, 1):
        _check_finite('load', i, ld.pd_ref, ld.qd_ref)
        if not 0 <= ld.bus < nb:
            raise CaseValidationError(f"bus index {ld.bus} does not exist", 'load', i)
    return case


def _check_finite(element: str, index: int, *values: float):
    for value in values:
        if not math.isfinite(value):
            raise CaseValidationError(f"non-finite value {value}", element, index)


def default_shed_cost(generators: List[Generator]) -> float:
    """Shedding price: 100 x the most expensive generator (at least 100 $/p.u.)."""
    max_cost = max((abs(g.cost) for g in generators), default=0.0)
    return SHED_COST_FACTOR * max(max_cost, 1.0)


# ---------------------------------------------------------------------------
# MATPOWER-subset reader
# ---------------------------------------------------------------------------

_ASSIGN = re.compile(r'^\s*mpc\.(\w+)\s*=\s*')
_FUNCTION = re.compile(r'^\s*function\s+(\w+)\s*=\s*(\w+)')
_TOKEN = re.compile(r'[^\s,;\]]+')


def _strip_comment(line: str) -> str:
    """Drop everything from the first '%' outside a quoted string."""
    in_quote = False
    for pos, char in enumerate(line):
        if char == "'":
            in_quote = not in_quote
        elif char == '%' and not in_quote:
            return line[:pos]
    return line


class MatpowerReader:
    """Tokenizer for the mpc.* assignment subset of MATPOWER case files."""

    SUPPORTED = ('baseMVA', 'version', 'bus', 'gen', 'branch', 'gencost')

    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.scalars: Dict[str, Any] = {}
        self.tables: Dict[str, List[List[float]]] = {}
        self.table_lines: Dict[str, List[int]] = {}
        self.warnings: List[str] = []
        self.name: Optional[str] = None

    def read(self) -> 'MatpowerReader':
        lineno = 0
        while lineno < len(self.lines):
            raw = self.lines[lineno]
            line = _strip_comment(raw)
            lineno += 1
            if not line.strip():
                continue

            function_match = _FUNCTION.match(line)
            if function_match:
                self.name = function_match.group(2)
                continue

            match = _ASSIGN.match(line)
            if not match:
                self.warnings.append(f"line {lineno}: ignored statement '{line.strip()}'")
                continue

            key = match.group(1)
            rest = line[match.end():]
            column = match.end() + 1
            stripped = rest.lstrip()
            column += len(rest) - len(stripped)

            if stripped.startswith('['):
                rows, row_lines, lineno = self._read_matrix(stripped[1:], lineno, column)
                if key in self.SUPPORTED:
                    self.tables[key] = rows
                    self.table_lines[key] = row_lines
                else:
                    self.warnings.append(f"line {lineno}: unsupported field mpc.{key} ignored")
            elif stripped.startswith('{'):
                lineno = self._skip_cell(stripped, lineno, column)
                self.warnings.append(f"unsupported field mpc.{key} ignored")
            elif stripped.startswith("'"):
                end = stripped.find("'", 1)
                if end < 0:
                    raise CaseSyntaxError("unterminated string", lineno, column)
                self.scalars[key] = stripped[1:end]
            else:
                token = stripped.split(';')[0].strip()
                try:
                    self.scalars[key] = float(token)
                except ValueError:
                    raise CaseSyntaxError(f"expected a number, found '{token}'", lineno, column)
                if key not in self.SUPPORTED:
                    self.warnings.append(f"line {lineno}: unsupported field mpc.{key} ignored")
        return self

    def _read_matrix(self, first: str, lineno: int, column: int) -> Tuple[List[List[float]], List[int], int]:
        """Consume a bracketed matrix; returns rows, their source lines, next line index."""
        rows: List[List[float]] = []
        row_lines: List[int] = []
        current: List[float] = []
        open_line, open_column = lineno, column
        text, offset, current_line = first, column, lineno

        while True:
            pos = 0
            closed = False
            while pos < len(text):
                char = text[pos]
                if char == ']':
                    closed = True
                    break
                if char == ';':
                    if current:
                        rows.append(current)
                        row_lines.append(current_line)
                        current = []
                    pos += 1
                    continue
                if char.isspace() or char == ',':
                    pos += 1
                    continue
                token = _TOKEN.match(text, pos).group(0)
                try:
                    current.append(float(token))
                except ValueError:
                    raise CaseSyntaxError(f"invalid number '{token}'", current_line, offset + pos)
                pos += len(token)
            if current:
                rows.append(current)
                row_lines.append(current_line)
                current = []
            if closed:
                break
            if current_line >= len(self.lines):
                raise CaseSyntaxError("unterminated matrix", open_line, open_column)
            text = _strip_comment(self.lines[current_line])
            current_line += 1
            offset = 1

        width = len(rows[0]) if rows else 0
        for row, row_line in zip(rows, row_lines):
            if len(row) != width:
                raise CaseSyntaxError(
                    f"row has {len(row)} columns, expected {width}", row_line, 1)
        return rows, row_lines, current_line

    def _skip_cell(self, first: str, lineno: int, column: int) -> int:
        if '}' in first:
            return lineno
        current_line = lineno
        while current_line < len(self.lines):
            current_line += 1
            if '}' in _strip_comment(self.lines[current_line - 1]):
                return current_line
        raise CaseSyntaxError("unterminated cell array", lineno, column)


def read_matpower(text: str, name: str = 'case') -> Tuple[GridCase, List[str]]:
    """Parse MATPOWER-subset text into a validated GridCase plus a warning list."""
    reader = MatpowerReader(text).read()
    warnings = list(reader.warnings)

    for key in ('baseMVA', 'bus', 'gen', 'branch', 'gencost'):
        if key not in reader.scalars and key not in reader.tables:
            raise CaseValidationError(f"missing required field mpc.{key}")
    base = float(reader.scalars['baseMVA'])
    if not base > 0:
        raise CaseValidationError(f"baseMVA must be positive, got {base}")

    bus_rows = _require_width(reader, 'bus', BUS_COLUMNS)
    gen_rows = _require_width(reader, 'gen', GEN_COLUMNS)
    branch_rows = _require_width(reader, 'branch', BRANCH_COLUMNS)
    cost_rows = reader.tables['gencost']

    index_of: Dict[int, int] = {}
    buses: List[Bus] = []
    loads: List[Load] = []
    for i, row in enumerate(bus_rows, 1):
        bus_id, kind = int(row[0]), int(row[1])
        if bus_id in index_of:
            raise CaseValidationError(f"duplicate bus number {bus_id}", 'bus', i)
        if kind not in (1, 2, 3):
            raise CaseValidationError(f"unsupported bus type {kind}", 'bus', i)
        index_of[bus_id] = len(buses)
        buses.append(Bus(bus_id=bus_id, kind=kind, gs=row[4] / base, bs=row[5] / base,
                         vm_min=row[12], vm_max=row[11], vm_set=row[7]))
        if row[2] != 0.0 or row[3] != 0.0:
            loads.append(Load(bus=index_of[bus_id], pd_ref=row[2] / base, qd_ref=row[3] / base))

    refs = [i for i, b in enumerate(buses) if b.kind == 3]
    if len(refs) != 1:
        raise CaseValidationError(f"exactly one reference bus (type 3) required, found {len(refs)}")

    generators: List[Generator] = []
    n_cost_rows = len(cost_rows)
    if n_cost_rows < len(gen_rows):
        raise CaseValidationError(
            f"mpc.gencost has {n_cost_rows} rows for {len(gen_rows)} generators")
    if n_cost_rows > len(gen_rows):
        warnings.append("reactive-power cost rows in mpc.gencost ignored")

    for i, row in enumerate(gen_rows, 1):
        if int(row[0]) not in index_of:
            raise CaseValidationError(f"bus {int(row[0])} does not exist", 'gen', i)
        if row[7] <= 0:
            warnings.append(f"gen {i} out of service, dropped")
            continue
        cost = _linear_cost(cost_rows[i - 1], i)
        generators.append(Generator(
            bus=index_of[int(row[0])], pg_min=row[9] / base, pg_max=row[8] / base,
            qg_min=row[4] / base, qg_max=row[3] / base, cost=cost * base,
            pg_set=row[1] / base, qg_set=row[2] / base, vg_set=row[5]))

    branches: List[Branch] = []
    for i, row in enumerate(branch_rows, 1):
        for end in (int(row[0]), int(row[1])):
            if end not in index_of:
                raise CaseValidationError(f"bus {end} does not exist", 'branch', i)
        if row[10] <= 0:
            warnings.append(f"branch {i} out of service, dropped")
            continue
        if row[3] == 0.0:
            raise CaseValidationError("zero reactance", 'branch', i)
        rating = row[5] if row[5] > 0 else UNLIMITED_RATING_MVA
        dva_min, dva_max = -DEFAULT_DVA, DEFAULT_DVA
        if len(row) >= 13 and not (row[11] == 0.0 and row[12] == 0.0):
            dva_min, dva_max = math.radians(row[11]), math.radians(row[12])
        branches.append(Branch(
            from_bus=index_of[int(row[0])], to_bus=index_of[int(row[1])],
            r=row[2], x=row[3], b_charge=row[4], s_max=rating / base,
            tap=row[8] if row[8] != 0.0 else 1.0, shift=math.radians(row[9]),
            dva_min=dva_min, dva_max=dva_max))

    case = GridCase(
        name=reader.name or name, base_mva=base, buses=tuple(buses),
        branches=tuple(branches), generators=tuple(generators), loads=tuple(loads),
        ref_bus=refs[0], shed_cost=default_shed_cost(generators))
    return validate_case(case), warnings


def _require_width(reader: MatpowerReader, key: str, width: int) -> List[List[float]]:
    rows = reader.tables.get(key)
    if rows is None:
        raise CaseValidationError(f"mpc.{key} must be a matrix")
    if rows and len(rows[0]) < width:
        raise CaseSyntaxError(f"mpc.{key} needs at least {width} columns, found {len(rows[0])}",
                              reader.table_lines[key][0], 1)
    return rows


def _linear_cost(row: List[float], index: int) -> float:
    """Linear coefficient ($/MWh) of a polynomial gencost row."""
    model = int(row[0])
    if model != 2:
        raise CaseValidationError("piecewise-linear costs are not supported", 'gencost', index)
    n_coeff = int(row[3])
    coeffs = row[4:4 + n_coeff]
    if len(coeffs) != n_coeff:
        raise CaseValidationError(f"expected {n_coeff} cost coefficients", 'gencost', index)
    if n_coeff <= 1:
        return 0.0
    if any(c != 0.0 for c in coeffs[:n_coeff - 2]):
        raise CaseValidationError("only linear generator costs are supported", 'gencost', index)
    return coeffs[n_coeff - 2]


# ---------------------------------------------------------------------------
# Native format
# ---------------------------------------------------------------------------

def serialize_case(case: GridCase) -> str:
    """Canonical native JSON text (floats written with exact round-trip repr)."""
    payload = {
        'format': NATIVE_FORMAT,
        'version': NATIVE_VERSION,
        'name': case.name,
        'base_mva': case.base_mva,
        'ref_bus': case.ref_bus,
        'shed_cost': case.shed_cost,
        'buses': [_fields(b) for b in case.buses],
        'branches': [_fields(br) for br in case.branches],
        'generators': [_fields(g) for g in case.generators],
        'loads': [_fields(ld) for ld in case.loads],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + '\n'


def _fields(obj) -> Dict[str, Any]:
    return {k: v for k, v in vars(obj).items() if k != 'pi'}


def read_native(text: str) -> GridCase:
    """Parse native JSON case text."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise CaseSyntaxError(e.msg, e.lineno, e.colno)
    if payload.get('format') != NATIVE_FORMAT:
        raise CaseValidationError(f"not a {NATIVE_FORMAT} document")
    if payload.get('version') != NATIVE_VERSION:
        raise CaseValidationError(f"unsupported native case version {payload.get('version')}")
    try:
        case = GridCase(
            name=payload['name'], base_mva=payload['base_mva'],
            buses=tuple(Bus(**b) for b in payload['buses']),
            branches=tuple(Branch(**br) for br in payload['branches']),
            generators=tuple(Generator(**g) for g in payload['generators']),
            loads=tuple(Load(**ld) for ld in payload['loads']),
            ref_bus=payload['ref_bus'], shed_cost=payload['shed_cost'])
    except (KeyError, TypeError) as e:
        raise CaseValidationError(f"malformed native case: {e}")
    except ValueError as e:
        raise CaseValidationError(str(e))
    return validate_case(case)


def parse_case(text: str, name: str = 'case') -> GridCase:
    """Parse native JSON or MATPOWER-subset text; MATPOWER warnings are logged."""
    if text.lstrip().startswith('{'):
        return read_native(text)
    case, warnings = read_matpower(text, name=name)
    for warning in warnings:
        logger.warning(f"{case.name}: {warning}")
    return case


def load_case(path: str) -> GridCase:
    """Read and parse a case file from disk."""
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return parse_case(text, name=name)


def case_hash(case: GridCase) -> str:
    """SHA-256 of the canonical native serialization."""
    return hashlib.sha256(serialize_case(case).encode('utf-8')).hexdigest()


def main():
    """Parse a case file and print its census."""
    parser = argparse.ArgumentParser(description='Parse and validate a grid case file')
    parser.add_argument('case', help='MATPOWER (.m) or native (.json) case file')
    parser.add_argument('--to-native', help='Write the case in native JSON format to this path')
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        case = load_case(args.case)
    except (ValueError, OSError) as e:
        logger.error(f"Failed to load {args.case}: {e}")
        sys.exit(1)

    print(f"{case.name}: {case.n_bus} buses, {case.n_branch} branches, "
          f"{case.n_gen} generators, {case.n_load} loads, base {case.base_mva} MVA")
    print(f"hash: {case_hash(case)}")
    if args.to_native:
        with open(args.to_native, 'w', encoding='utf-8') as f:
            f.write(serialize_case(case))
        print(f"native case written to {args.to_native}")


if __name__ == '__main__':
    main()
