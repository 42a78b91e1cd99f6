# Copyright 2026 The vidmdl Authors
# SPDX-License-Identifier: Apache-2.0
"""Multi-domain video learning with domain-specific adapters."""

from ._vidmdl import (
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    NumericError,
    RoutingError,
    SyntheticDomain,
    adapter_param_count,
    audit,
    grad_suite,
    lr_at,
    reference_report,
    template_text,
    templates,
    train,
    x3dm_channels,
)

__version__ = "0.1.0"


def audit_x3dm(kind="(2+1)d", insertion="all", domains=(51, 101, 400), trainable_base=True):
    """Parameter budget of the X3D-M backbone with adapters."""
    channels, feature_width, base = x3dm_channels()
    return audit(channels, feature_width, kind, insertion, list(domains), trainable_base, base)


def megas(count):
    """Parameter count in millions, two decimals, rounded half up."""
    return "%d.%02d" % divmod((count + 5000) // 10000, 100)
