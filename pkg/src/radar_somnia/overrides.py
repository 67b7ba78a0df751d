"""``key=value`` overrides for frozen config dataclasses."""

from dataclasses import fields, replace


def parse_value(annotation, current, raw):
    """Convert an override string to the type of the field it replaces."""
    if not isinstance(raw, str):
        return raw
    typ = str(annotation)
    if raw.lower() in ("none", "null"):
        if "None" in typ:
            return None
        raise ValueError(f"field does not accept None ({typ})")
    base = typ.split("|")[0].strip()
    if isinstance(current, bool) or base == "bool":
        if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, tuple) or base == "tuple":
        return tuple(float(v) for v in raw.split(","))
    if isinstance(current, int) or base == "int":
        return int(raw)
    if isinstance(current, float) or base == "float":
        return float(raw)
    return raw


def apply_overrides(obj, overrides, locked=()):
    """Copy of dataclass ``obj`` with string overrides applied.

    Unknown or ``locked`` keys raise ``KeyError``; unparsable values raise
    ``ValueError``.
    """
    known = {f.name: f for f in fields(obj)}
    kw = {}
    for k, v in overrides.items():
        if k not in known or k in locked:
            raise KeyError(k)
        kw[k] = parse_value(known[k].type, getattr(obj, k), v)
    return replace(obj, **kw)
