"""Density tables: estimated or forward-computed densities with errors."""

import io
from dataclasses import dataclass


@dataclass
class DensityRow:
    quantity: str
    test_body: str          # id of the paired test body, "" if none
    estimate: float
    stderr: float
    reps: int


class DensityTable:
    """Rows of (quantity, test body, estimate, standard error, reps)."""

    def __init__(self, rows=None):
        self.rows = list(rows) if rows else []

    def add(self, quantity, test_body, estimate, stderr, reps):
        if stderr < 0:
            raise ValueError("standard error must be nonnegative")
        if reps < 1:
            raise ValueError("reps must be >= 1")
        self.rows.append(DensityRow(quantity, test_body, float(estimate),
                                    float(stderr), int(reps)))

    def get(self, quantity, test_body=""):
        for row in self.rows:
            if row.quantity == quantity and row.test_body == test_body:
                return row
        raise KeyError(f"no row ({quantity!r}, {test_body!r})")

    def value(self, quantity, test_body=""):
        return self.get(quantity, test_body).estimate

    def quantities(self):
        return sorted({r.quantity for r in self.rows})

    def bodies(self, quantity):
        return [r.test_body for r in self.rows if r.quantity == quantity]

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    # CSV schema: header `quantity,test_body,estimate,stderr,reps`; an
    # optional leading comment line carries provenance (config hash, seed).
    def to_csv(self, path=None, comment=None):
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        buf.write("quantity,test_body,estimate,stderr,reps\n")
        for r in self.rows:
            buf.write("%s,%s,%.17g,%.17g,%d\n" % (
                r.quantity, r.test_body, r.estimate, r.stderr, r.reps))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source):
        if isinstance(source, str) and "\n" not in source:
            with open(source) as fh:
                text = fh.read()
        else:
            text = source
        lines = [ln for ln in text.splitlines()
                 if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0].strip() != "quantity,test_body,estimate,stderr,reps":
            raise ValueError("bad density CSV header")
        table = cls()
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 5:
                raise ValueError(f"bad density CSV row: {ln!r}")
            table.add(parts[0], parts[1], float(parts[2]), float(parts[3]),
                      int(parts[4]))
        return table
