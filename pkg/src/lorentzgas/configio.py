"""Scatterer configuration files: JSON documents validated against a schema
and turned into point-set specs."""

from __future__ import annotations

import json

import jsonschema
import numpy as np

from . import pointset as ps

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["lattice", "poisson", "cutproject", "delone",
                          "fibonacci", "wennberg", "honeycomb", "points"]},
        "basis": {"type": "array"},
        "intensity": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "dim": {"type": "integer", "minimum": 1},
        "dim_phys": {"type": "integer", "minimum": 1},
        "dim_int": {"type": "integer", "minimum": 0},
        "window_boxes": {"type": "array"},
        "window_points": {"type": "array"},
        "internal_shift": {"type": "array"},
        "translates": {"type": "array"},
        "points": {"type": "array"},
        "a": {"type": "number", "exclusiveMinimum": 0},
        "jitter": {
            "type": "object",
            "properties": {
                "amplitude": {"type": "number", "minimum": 0},
                "seed": {"type": "integer"},
                "law": {"enum": ["ball", "sphere", "gauss"]},
            },
            "required": ["amplitude", "seed"],
        },
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "geometry": {"enum": ["sphere", "slab"]},
    },
    "required": ["kind"],
}


def load_source(doc):
    """Build the point-set spec described by a config document (dict)."""
    jsonschema.validate(doc, CONFIG_SCHEMA)
    kind = doc["kind"]
    if kind == "lattice":
        return ps.LatticeSpec(np.asarray(doc["basis"], dtype=float))
    if kind == "poisson":
        return ps.PoissonSpec(doc["intensity"], doc["seed"],
                              dim=doc.get("dim", 2))
    if kind == "cutproject":
        window = ps.WindowSpec(
            boxes=[ps.Box(b[0], b[1]) for b in doc.get("window_boxes", [])],
            points=doc.get("window_points"))
        return ps.CutProjectSpec(doc["dim_phys"], doc["dim_int"],
                                 np.asarray(doc["basis"], dtype=float),
                                 window, doc.get("internal_shift"))
    if kind == "delone":
        return ps.DeloneUnionSpec(
            ps.LatticeSpec(np.asarray(doc["basis"], dtype=float)),
            np.asarray(doc["translates"], dtype=float))
    if kind == "fibonacci":
        return ps.fibonacci_spec()
    if kind == "wennberg":
        return ps.wennberg_spec()
    if kind == "honeycomb":
        return ps.honeycomb_spec(doc.get("a", 1.0))
    if kind == "points":
        return ps.FinitePointsSpec(np.asarray(doc["points"], dtype=float))
    raise ps.ConfigError(f"unknown config kind {kind!r}")


def load_config(path, radius=None, geometry=None, radius_optional=False):
    """Load a ScattererConfig from a JSON file; radius/geometry flags
    override the file's values.

    radius_optional permits radius-free configs (pure point enumeration);
    jittered configs always need a radius since the displacement scale is
    r * amplitude.
    """
    with open(path) as f:
        doc = json.load(f)
    source = load_source(doc)
    jitter = None
    if "jitter" in doc:
        j = doc["jitter"]
        jitter = ps.JitterSpec(amplitude=j["amplitude"], seed=j["seed"],
                               law=j.get("law", "ball"))
    r = radius if radius is not None else doc.get("radius")
    if r is None:
        if radius_optional and jitter is None:
            r = 1.0
        else:
            raise ps.ConfigError(
                "radius must come from the config file or --r")
    geom = geometry if geometry is not None else doc.get("geometry", "sphere")
    return ps.ScattererConfig(source=source, radius=float(r), geometry=geom,
                              jitter=jitter)
