from shadowmarket.simgen import SimConfig

SMALL = {
    "merchants": {"freemium_only": 3, "premium_only": 5, "both": 8, "leaders": 3},
    "phony": {"count": 60},
    "legitimate": {"count": 120},
    "customers": {"count": 20, "verified": 2},
}


def small_config(seed: int = 0, **over) -> SimConfig:
    cfg = {k: dict(v) for k, v in SMALL.items()}
    for k, v in over.items():
        cfg.setdefault(k, {}).update(v) if isinstance(v, dict) else cfg.__setitem__(k, v)
    cfg["seed"] = seed
    return SimConfig.from_dict(cfg)
