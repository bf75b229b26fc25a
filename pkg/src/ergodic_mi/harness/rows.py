"""Result rows and their CSV serialization.

Every experiment emits rows with the fixed header ``CSV_HEADER``. Extra
coordinates (delay spread ``L``, block length, histogram bin edges, Doppler
and Rice settings) travel inside the estimator field as ``name@key=value;...``
so the column layout never changes. Rows that are not information values
(histogram masses, densities, profile norms) are never converted to bits.
"""

import csv
from dataclasses import dataclass, field, replace
import io
import math

__all__ = ["CSV_HEADER", "NON_INFORMATION", "ResultRow", "format_estimator",
           "parse_estimator", "rows_to_csv", "write_csv", "read_csv"]

CSV_HEADER = ("experiment", "snr_db", "estimator", "value", "std_error",
              "n_steps", "replication", "wall_time_ms")

# estimators whose value is not measured in nats
NON_INFORMATION = frozenset({"dos_mass", "mp_density", "mp_cdf_gap",
                             "profile_norm", "eigen_count"})


def format_estimator(name, **tags):
    if not tags:
        return name
    body = ";".join(f"{k}={_fmt_tag(v)}" for k, v in tags.items())
    return f"{name}@{body}"


def _fmt_tag(v):
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def parse_estimator(text):
    """Split ``name@k=v;...`` into ``(name, {k: v})`` with string values."""
    name, _, body = text.partition("@")
    tags = {}
    if body:
        for item in body.split(";"):
            k, _, v = item.partition("=")
            tags[k] = v
    return name, tags


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    snr_db: float
    estimator: str
    value: float
    std_error: float
    n_steps: int
    replication: int
    wall_time_ms: float = 0.0
    information: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite value in row {self.estimator}")
        if not self.std_error >= 0:
            raise ValueError(f"negative standard error in row {self.estimator}")

    @property
    def base_estimator(self):
        return parse_estimator(self.estimator)[0]

    def in_units(self, units):
        if units == "nats" or not self.information:
            return self
        if units != "bits":
            raise ValueError(f"unknown units {units!r}")
        ln2 = math.log(2.0)
        return replace(self, value=self.value / ln2, std_error=self.std_error / ln2)

    def to_record(self):
        return [self.experiment, _fmt(self.snr_db), self.estimator,
                _fmt(self.value), _fmt(self.std_error), str(int(self.n_steps)),
                str(int(self.replication)), _fmt(self.wall_time_ms)]

    @classmethod
    def from_record(cls, record):
        if len(record) != len(CSV_HEADER):
            raise ValueError(f"expected {len(CSV_HEADER)} fields, got {len(record)}")
        exp, snr, est, value, se, n, rep, wall = record
        name = parse_estimator(est)[0]
        return cls(exp, float(snr), est, float(value), float(se), int(n),
                   int(rep), float(wall), information=name not in NON_INFORMATION)


def _fmt(x):
    return format(float(x), ".12g")


def rows_to_csv(rows, units="nats"):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.in_units(units).to_record())
    return buf.getvalue()


def write_csv(rows, path, units="nats"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows, units))


def read_csv(source):
    """Parse CSV text or a file path back into rows (values as written)."""
    if "\n" not in str(source):
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    else:
        text = source
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    return [ResultRow.from_record(rec) for rec in reader if rec]
