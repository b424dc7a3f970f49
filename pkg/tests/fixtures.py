"""Schemas and constraint sets shared by several test modules."""

from monogrove.schema import Feature, FeatureSchema, MonotoneSpec


def gmsc_schema():
    feats = []
    for i in range(1, 11):
        name = f"x{i}"
        if name in ("x3", "x7", "x9"):
            feats.append(Feature(name, "count", 0.0, 4.0, 4.0))
        else:
            feats.append(Feature(name, "continuous", -2.0, 2.0))
    return FeatureSchema(tuple(feats))


def gmsc_spec():
    return MonotoneSpec(("x3", "x7", "x9"), (), (("x7", "x9"), ("x9", "x3")))


def heart_schema():
    binary = {"x2", "x3", "x5", "x11"}
    return FeatureSchema(
        tuple(Feature(f"x{i}", "binary" if f"x{i}" in binary else "continuous", 0.0, 1.0) for i in range(1, 13))
    )


def heart_spec():
    return MonotoneSpec(("x2", "x3", "x5", "x11"), (), (("x2", "x11"), ("x3", "x11"), ("x5", "x11")))


def two_feature_schema(kind="continuous", lo=0.0, hi=1.0, names=("a", "b")):
    return FeatureSchema(tuple(Feature(n, kind, lo, hi) for n in names))


def linear_subnet(coefs, bias=0.0):
    """Exactly linear subnet ``x -> coefs . x + bias`` (identity hidden unit)."""
    import numpy as np

    from monogrove.diffcore import SubnetParams

    w = np.asarray(coefs, dtype=float).reshape(1, -1)
    return SubnetParams((w, np.array([[1.0]])), (np.zeros(1), np.array([float(bias)])), "identity")


def linear_model(schema, arch, coefs: dict, intercept=0.0, task="regression"):
    """GroveModel whose subnets are linear; ``coefs`` maps feature -> slope."""
    from monogrove.grove import GroveModel
    from monogrove.schema import group_label

    subnets = {group_label(g): linear_subnet([coefs.get(n, 0.0) for n in g]) for g in arch.groups}
    return GroveModel(float(intercept), subnets, arch, schema, task)


def function_subnet_model(schema, arch, rng, task="regression"):
    import numpy as np

    from monogrove.grove import init_model

    m = init_model(arch, schema, task, rng)
    return m.with_flat_params(rng.normal(0, 1.0, size=m.flat_params().shape))
