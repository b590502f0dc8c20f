"""JSON schemas and deterministic file output.

System definition files carry the state dimension, drift vector, diffusion
matrix, and target set, with every polynomial encoded as an explicit term
list: {"terms": [{"coeff": c, "exps": [e1, ..., en]}]}. Exponent vectors
must match the declared dimension exactly; nothing is truncated or
broadcast. Certificates round-trip with their Gram blocks (dense row-major
matrices over recorded monomial bases).

All JSON is written with sorted keys and fixed separators, and all CSV
floats with 17 significant digits, so byte-identical reruns follow from
identical inputs and seeds. A RunManifest with the resolved configuration
and input digests accompanies every output directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, sosbuild
from .polyalg import Monomial, Polynomial
from .sdemodel import SdeSystem, SemialgebraicSet
from .sosbuild import DriftCertificate, GramBlock, MonomialBasis, VariantCertificate

SCHEMA_VERSION = "1"


class SchemaError(ValueError):
    """Input file violates the documented JSON schema."""


# -- polynomials ---------------------------------------------------------------


def poly_to_dict(p: Polynomial) -> dict:
    return {
        "terms": [
            {"coeff": coeff, "exps": list(mono.exponents)}
            for mono, coeff in p.sorted_terms()
        ]
    }


def poly_from_dict(obj, dimension: int, where: str) -> Polynomial:
    if not isinstance(obj, dict) or "terms" not in obj:
        raise SchemaError(f"{where}: polynomial must be an object with a 'terms' list")
    terms = obj["terms"]
    if not isinstance(terms, list):
        raise SchemaError(f"{where}: 'terms' must be a list")
    pairs = []
    for k, term in enumerate(terms):
        if not isinstance(term, dict) or "coeff" not in term or "exps" not in term:
            raise SchemaError(f"{where}: term {k} needs 'coeff' and 'exps'")
        coeff = term["coeff"]
        exps = term["exps"]
        if not isinstance(coeff, (int, float)) or isinstance(coeff, bool):
            raise SchemaError(f"{where}: term {k} coefficient must be a number")
        if (
            not isinstance(exps, list)
            or len(exps) != dimension
            or any(not isinstance(e, int) or isinstance(e, bool) or e < 0 for e in exps)
        ):
            raise SchemaError(
                f"{where}: term {k} exponent vector must be {dimension} "
                "non-negative integers"
            )
        pairs.append((float(coeff), tuple(exps)))
    return Polynomial.from_terms(dimension, pairs)


# -- systems -------------------------------------------------------------------


def system_to_dict(sys: SdeSystem, target: SemialgebraicSet | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n": sys.n,
        "m": sys.m,
        "f": [poly_to_dict(p) for p in sys.f],
        "g": [[poly_to_dict(p) for p in row] for row in sys.g],
    }
    if target is not None:
        doc["target"] = {"constraints": [poly_to_dict(p) for p in target.constraints]}
    return doc


def system_from_dict(doc) -> tuple[SdeSystem, SemialgebraicSet | None]:
    if not isinstance(doc, dict):
        raise SchemaError("system file must contain a JSON object")
    for key in ("n", "m", "f", "g"):
        if key not in doc:
            raise SchemaError(f"system file missing required key '{key}'")
    n, m = doc["n"], doc["m"]
    if not isinstance(n, int) or not isinstance(m, int) or n < 1 or m < 1:
        raise SchemaError("'n' and 'm' must be positive integers")
    if not isinstance(doc["f"], list) or len(doc["f"]) != n:
        raise SchemaError(f"'f' must be a list of {n} polynomials")
    f = [poly_from_dict(p, n, f"f[{i}]") for i, p in enumerate(doc["f"])]
    g_doc = doc["g"]
    if (
        not isinstance(g_doc, list)
        or len(g_doc) != n
        or any(not isinstance(row, list) or len(row) != m for row in g_doc)
    ):
        raise SchemaError(f"'g' must be an {n}x{m} matrix of polynomials")
    g = [
        [poly_from_dict(p, n, f"g[{i}][{j}]") for j, p in enumerate(row)]
        for i, row in enumerate(g_doc)
    ]
    target = None
    if "target" in doc and doc["target"] is not None:
        tdoc = doc["target"]
        if not isinstance(tdoc, dict) or "constraints" not in tdoc:
            raise SchemaError("'target' must be an object with 'constraints'")
        cons = [
            poly_from_dict(p, n, f"target.constraints[{i}]")
            for i, p in enumerate(tdoc["constraints"])
        ]
        if not cons:
            raise SchemaError("'target.constraints' must be non-empty")
        target = SemialgebraicSet(cons)
    return SdeSystem(f, g), target


def load_system(path) -> tuple[SdeSystem, SemialgebraicSet | None]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return system_from_dict(doc)


# -- matrices ------------------------------------------------------------------


def load_matrix(path) -> np.ndarray:
    """Dense row-major numeric array from a JSON file (bare or under 'A'/'B')."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(doc, dict):
        for key in ("A", "B", "matrix"):
            if key in doc:
                doc = doc[key]
                break
    try:
        mat = np.array(doc, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: not a numeric array ({exc})") from exc
    if mat.ndim != 2:
        raise SchemaError(f"{path}: expected a 2-d array, got shape {mat.shape}")
    return mat


def load_matrix_pair(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "A" not in doc or "B" not in doc:
        raise SchemaError(f"{path}: expected an object with 'A' and 'B'")
    A = np.array(doc["A"], dtype=np.float64)
    B = np.array(doc["B"], dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2:
        raise SchemaError(f"{path}: 'A' and 'B' must be 2-d arrays")
    return A, B


# -- certificates ----------------------------------------------------------------


def _basis_to_dict(basis: MonomialBasis) -> dict:
    return {
        "dimension": basis.dimension,
        "half_degree": basis.half_degree,
        "monomials": [list(m.exponents) for m in basis.monomials],
    }


def _basis_from_dict(obj, where: str) -> MonomialBasis:
    try:
        monos = tuple(Monomial(tuple(int(e) for e in exps)) for exps in obj["monomials"])
        return MonomialBasis(int(obj["dimension"]), int(obj["half_degree"]), monos)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed basis ({exc})") from exc


def _gram_to_dict(block: GramBlock) -> dict:
    return {
        "basis": _basis_to_dict(block.basis),
        "matrix": [[float(v) for v in row] for row in np.asarray(block.matrix)],
    }


def _gram_from_dict(obj, where: str) -> GramBlock:
    basis = _basis_from_dict(obj.get("basis", {}), where)
    matrix = np.array(obj.get("matrix"), dtype=np.float64)
    if matrix.shape != (len(basis), len(basis)):
        raise SchemaError(f"{where}: Gram matrix shape {matrix.shape} does not match basis")
    return GramBlock(basis=basis, matrix=matrix)


def drift_certificate_to_dict(cert: DriftCertificate) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "drift",
        "V": poly_to_dict(cert.V),
        "gamma0": cert.gamma0,
        "lambda0": cert.lambda0,
        "gamma1": cert.gamma1,
        "lambda1": cert.lambda1,
        "d": cert.d,
        "compact_radius": cert.compact_radius,
        "gram_blocks": {name: _gram_to_dict(b) for name, b in cert.gram_blocks.items()},
        "residuals": dict(cert.residuals),
    }


def variant_certificate_to_dict(cert: VariantCertificate) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "variant",
        "zeta": poly_to_dict(cert.zeta),
        "lambda": cert.lam,
        "mu": cert.mu,
        "alpha": list(cert.alpha),
        "s_multipliers": [poly_to_dict(p) for p in cert.s_multipliers],
        "lambda_multiplier": poly_to_dict(cert.lambda_multiplier),
        "epsilon": cert.epsilon,
        "gram_blocks": {name: _gram_to_dict(b) for name, b in cert.gram_blocks.items()},
        "residuals": dict(cert.residuals),
    }


def certificate_from_dict(doc, dimension: int):
    if not isinstance(doc, dict) or "kind" not in doc:
        raise SchemaError("certificate file must be an object with a 'kind' field")
    kind = doc["kind"]
    grams = {
        name: _gram_from_dict(obj, f"gram_blocks[{name}]")
        for name, obj in doc.get("gram_blocks", {}).items()
    }
    if kind == "drift":
        return DriftCertificate(
            V=poly_from_dict(doc["V"], dimension, "V"),
            gamma0=float(doc["gamma0"]),
            lambda0=float(doc["lambda0"]),
            gamma1=float(doc["gamma1"]),
            lambda1=float(doc["lambda1"]),
            gram_blocks=grams,
            residuals=dict(doc.get("residuals", {})),
        )
    if kind == "variant":
        return VariantCertificate(
            zeta=poly_from_dict(doc["zeta"], dimension, "zeta"),
            lam=float(doc["lambda"]),
            mu=float(doc["mu"]),
            alpha=[float(a) for a in doc["alpha"]],
            s_multipliers=[
                poly_from_dict(p, dimension, f"s_multipliers[{i}]")
                for i, p in enumerate(doc["s_multipliers"])
            ],
            lambda_multiplier=poly_from_dict(
                doc["lambda_multiplier"], dimension, "lambda_multiplier"
            ),
            epsilon=float(doc["epsilon"]),
            gram_blocks=grams,
            residuals=dict(doc.get("residuals", {})),
        )
    raise SchemaError(f"unknown certificate kind '{kind}'")


def load_certificate(path, dimension: int):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return certificate_from_dict(doc, dimension)


# -- deterministic output ---------------------------------------------------------


def write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, separators=(",", ": "))
        fh.write("\n")


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path, header: list[str], rows) -> None:
    """CSV with 17-significant-digit floats; ints and strings pass through."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, (float, np.floating)):
                cells.append(format_float(float(value)))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int | None
    inputs: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "toolkit_version": __version__,
        }

    def write(self, out_dir) -> None:
        write_json(Path(out_dir) / "manifest.json", self.to_dict())


def make_manifest(subcommand: str, config: dict, seed: int | None, input_paths: dict) -> RunManifest:
    digests = {name: file_digest(p) for name, p in input_paths.items()}
    return RunManifest(subcommand=subcommand, config=config, seed=seed, inputs=digests)


# -- sos constraint export (used by reports) --------------------------------------


def gram_summary(cert) -> dict:
    """Minimum eigenvalue per Gram block, for report output."""
    return {
        name: {"min_eigenvalue": block.min_eigenvalue(), "size": len(block.basis)}
        for name, block in cert.gram_blocks.items()
    }


def sosbuild_trace_rows(trace: list["sosbuild.TraceEntry"]):
    for entry in trace:
        yield (entry.lam, entry.iteration, entry.step, entry.eps)
