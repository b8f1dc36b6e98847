"""
Tabular experiment results: declared columns, rows, provenance and the
acceptance checks evaluated on them.
"""

import csv
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

from django.core.exceptions import ImproperlyConfigured
from django.forms.utils import pretty_name

logger = logging.getLogger(__name__)


class Header:
    def __init__(self, name, label=None, help_text=""):
        self.name = name
        self.label = label or pretty_name(name)
        self.help_text = help_text

    def __repr__(self):
        return "<Header: {0}>".format(self.name)


def is_header_kwargs(header):
    try:
        if not len(header) == 2:
            return False
    except TypeError:
        return False
    return isinstance(header[0], str) and isinstance(header[1], dict)


class HeaderSet:
    """
    Ordered, uniquely named columns.  Accepts ``Header`` instances, bare
    names, ``(name, {kwargs})`` pairs and ``(name, label, ...)`` tuples.
    """

    HeaderClass = Header

    def __init__(self, headers):
        self.headers = OrderedDict()
        for header in headers:
            if isinstance(header, Header):
                self.headers[header.name] = header
            elif isinstance(header, str):
                self.headers[header] = self.HeaderClass(header)
            elif is_header_kwargs(header):
                header_name, header_kwargs = header
                self.headers[header_name] = self.HeaderClass(header_name, **header_kwargs)
            elif isinstance(header, (tuple, list)) and len(header):
                self.headers[header[0]] = self.HeaderClass(*header)
            else:
                raise ImproperlyConfigured(
                    "Unknown format in header declaration: `{0}`".format(repr(header))
                )
        if not len(self) == len(headers):
            raise ImproperlyConfigured("Header names must be unique")

    def __len__(self):
        return len(self.headers)

    def __iter__(self):
        return iter(self.headers.values())

    def __contains__(self, name):
        return name in self.headers

    def __getitem__(self, key):
        if isinstance(key, int):
            return list(self.headers.values())[key]
        return self.headers[key]

    @property
    def names(self):
        return list(self.headers.keys())


def format_value(value):
    """Floats with 17 significant digits, so a written table reads back exactly."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return "%.17g" % value
    if isinstance(value, complex):
        return "%.17g%+.17gj" % (value.real, value.imag)
    return str(value)


def _json_value(value):
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass(frozen=True)
class AcceptanceCheck:
    name: str
    passed: bool
    detail: str = ""
    advisory: bool = False


@dataclass
class RunResult:
    experiment: str
    headers: HeaderSet
    provenance: dict
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)

    def add_row(self, **values):
        missing = [name for name in self.headers.names if name not in values]
        unknown = [name for name in values if name not in self.headers]
        if missing or unknown:
            raise ValueError(
                "Row does not match the columns of `{0}`: missing {1}, unknown {2}".format(
                    self.experiment, missing, unknown
                )
            )
        row = OrderedDict((name, values[name]) for name in self.headers.names)
        self.rows.append(row)
        return row

    def column(self, name):
        return [row[name] for row in self.rows]

    def check(self, name, passed, detail="", advisory=False):
        """
        Record a check.  An ``advisory`` check is reported and logged but does
        not take part in acceptance.
        """
        check = AcceptanceCheck(name, bool(passed), detail, advisory)
        self.checks.append(check)
        if advisory and not check.passed:
            logger.info("%s: advisory check `%s` does not hold (%s)", self.experiment, name, detail)
        elif not check.passed:
            logger.warning("%s: acceptance check `%s` failed (%s)", self.experiment, name, detail)
        return check

    @property
    def accepted(self):
        return not self.failed_checks

    @property
    def failed_checks(self):
        return [check for check in self.checks if not (check.passed or check.advisory)]

    def write_csv(self, stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(self.headers.names)
        for row in self.rows:
            writer.writerow([format_value(value) for value in row.values()])

    def as_dict(self):
        return {
            "experiment": self.experiment,
            "provenance": self.provenance,
            "columns": self.headers.names,
            "rows": [{k: _json_value(v) for k, v in row.items()} for row in self.rows],
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail, "advisory": c.advisory} for c in self.checks
            ],
        }

    def write_json(self, stream):
        json.dump(self.as_dict(), stream, indent=2)
        stream.write("\n")

    def write(self, stream, format="csv"):
        if format == "json":
            self.write_json(stream)
        else:
            self.write_csv(stream)
