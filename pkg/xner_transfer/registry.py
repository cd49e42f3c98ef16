"""
Entity-type and domain registries.

Entity types are the labels a tagger may emit. Domains name the parallel
corpora a pipeline draws from; each domain carries the entity-type mix the
synthetic generator uses to imitate it.
"""

from typing import Any, Dict, List

ENTITY_TYPES: Dict[str, Dict[str, Any]] = {
    "PER": {"description": "Person names"},
    "ORG": {"description": "Organisations, companies, institutions"},
    "LOC": {"description": "Locations, countries, cities"},
    "MISC": {"description": "Miscellaneous named entities"},
}

# Type weights follow the entity mix observed for the corpora they are named
# after: subtitles are person-heavy, UN documents organisation-heavy, news
# location-heavy. vocab_share is the fraction of the synthetic vocabulary
# (general words and names) a domain draws from; each domain gets its own
# seeded subset.
DOMAINS: Dict[str, Dict[str, Any]] = {
    "synthetic": {
        "description": "Generic synthetic bilingual text",
        "type_weights": {"PER": 1.0, "ORG": 1.0, "LOC": 1.0},
        "vocab_share": 1.0,
    },
    "subtitles": {
        "description": "Informal spoken language (movie subtitles)",
        "type_weights": {"PER": 0.73, "ORG": 0.11, "LOC": 0.16},
        "vocab_share": 0.5,
    },
    "un": {
        "description": "Formal, political register (UN documents)",
        "type_weights": {"PER": 0.03, "ORG": 0.65, "LOC": 0.32},
        "vocab_share": 0.5,
    },
    "news": {
        "description": "Newspaper text (news test sets, commentary)",
        "type_weights": {"PER": 0.23, "ORG": 0.20, "LOC": 0.57},
        "vocab_share": 0.5,
    },
}


def get_entity_types() -> List[str]:
    """
    Get the registered entity type names.

    Returns:
        Type names in registration order
    """
    return list(ENTITY_TYPES)


def add_entity_type(name: str, description: str = "") -> None:
    """
    Register a new entity type.

    Args:
        name: Upper-case type name such as "PRODUCT"
        description: Free-text description

    Raises:
        ValueError: If the name is not upper case or already registered
    """
    if not name or name != name.upper() or not name.isidentifier():
        raise ValueError(f"entity type names must be upper-case identifiers: {name!r}")
    if name in ENTITY_TYPES:
        raise ValueError(f"entity type already registered: {name}")
    ENTITY_TYPES[name] = {"description": description}


def get_domain(name: str) -> Dict[str, Any]:
    """
    Get a domain profile by name.

    Args:
        name: Name of the domain

    Returns:
        Domain profile dict or empty dict if not found
    """
    return DOMAINS.get(name, {})


def is_known_domain(name: str) -> bool:
    return name in DOMAINS


def get_all_domains() -> Dict[str, Dict[str, Any]]:
    """
    Get all domain profiles.

    Returns:
        Dictionary of all domain profiles
    """
    return DOMAINS.copy()


def add_domain(name: str, profile: Dict[str, Any]) -> None:
    """
    Register a domain.

    Args:
        name: Domain label used in parallel pairs and reports
        profile: Domain profile with "type_weights" and optional
            "description" and "vocab_share"

    Raises:
        ValueError: If the profile does not validate
    """
    errors = validate_domain(profile)
    if errors:
        raise ValueError(f"invalid domain {name!r}: " + "; ".join(errors))
    DOMAINS[name] = profile


def remove_domain(name: str) -> bool:
    """
    Remove a domain.

    Args:
        name: Name of the domain to remove

    Returns:
        True if the domain was removed, False if not found
    """
    if name in DOMAINS:
        del DOMAINS[name]
        return True
    return False


def validate_domain(profile: Dict[str, Any]) -> List[str]:
    """
    Validate a domain profile.

    Args:
        profile: Profile dictionary to validate

    Returns:
        List of validation errors (empty if valid)
    """
    errors = []

    if "type_weights" not in profile:
        errors.append("Missing required field: type_weights")
        return errors

    weights = profile["type_weights"]
    if not isinstance(weights, dict) or not weights:
        errors.append("type_weights must be a non-empty dict")
        return errors

    for etype, weight in weights.items():
        if etype not in ENTITY_TYPES:
            errors.append(f"unknown entity type in type_weights: {etype}")
        if not isinstance(weight, (int, float)) or weight < 0:
            errors.append(f"weight for {etype} must be a non-negative number")

    if not any(
        isinstance(w, (int, float)) and w > 0 for w in weights.values()
    ):
        errors.append("type_weights needs at least one positive weight")

    share = profile.get("vocab_share", 1.0)
    if not isinstance(share, (int, float)) or not 0 < share <= 1:
        errors.append("vocab_share must lie in (0, 1]")

    return errors
