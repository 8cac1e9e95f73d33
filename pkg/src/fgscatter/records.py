"""JSON-lines records and CSV sweeps with deterministic formatting."""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

SWEEP_HEADER = ("mode", "re_s", "im_s", "re_S", "im_S")


@dataclass
class Record:
    quantity: str
    params: dict
    value: object
    error_estimate: object = None
    provenance: dict = field(default_factory=dict)

    def as_dict(self):
        prov = {"package": "fgscatter", "version": __version__}
        prov.update(self.provenance)
        return {"quantity": self.quantity, "params": self.params, "value": self.value,
                "error_estimate": self.error_estimate, "provenance": prov}


def format_number(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite number {x}")
    text = format(x, ".17g")
    return text if any(ch in text for ch in ".en") else text + ".0"


def encode(obj) -> str:
    """Compact JSON text; floats with 17 significant digits, complex as [re, im]."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, Fraction):
        return json.dumps(f"{obj.numerator}/{obj.denominator}")
    if isinstance(obj, (float, np.floating)):
        return format_number(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return f"[{format_number(obj.real)}, {format_number(obj.imag)}]"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def to_line(record: Record) -> str:
    return encode(record.as_dict())


def _open_out(path):
    if path in (None, "", "-"):
        return sys.stdout, False
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        return open(p, "w", encoding="utf-8", newline="\n"), True
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror}") from err


def write_records(records, path) -> None:
    out, close = _open_out(path)
    try:
        for rec in records:
            out.write(to_line(rec) + "\n")
    finally:
        if close:
            out.close()


def read_records(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def decode_complex(value):
    if isinstance(value, list) and len(value) == 2:
        return complex(value[0], value[1])
    return value


def sweep_csv(rows) -> str:
    """rows: (mode label, s, S) triples."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for mode, s, S in rows:
        s, S = complex(s), complex(S)
        writer.writerow([mode, *(format_number(v) for v in (s.real, s.imag, S.real, S.imag))])
    return buf.getvalue()


def write_text(text: str, path) -> None:
    out, close = _open_out(path)
    try:
        out.write(text)
    finally:
        if close:
            out.close()
