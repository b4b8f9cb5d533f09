#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Telemetry configuration for ringtdvp runs."""

from provide.foundation.eventsets.types import EventMapping, EventSet, FieldMapping

EVENT_SET = EventSet(
    name="ringtdvp",
    description="cMPS ground-state solver event enrichment",
    mappings=[
        EventMapping(
            name="ringtdvp_domain",
            visual_markers={
                "spectral": "🌈",
                "evolution": "⏳",
                "observables": "📈",
                "oracle": "🔮",
                "state": "💾",
                "run": "🧪",
                "default": "❓",
            },
            default_key="default",
        ),
        EventMapping(
            name="ringtdvp_action",
            visual_markers={
                "decompose": "🔬",
                "solve": "🧮",
                "step": "👣",
                "sweep": "🧹",
                "certify": "🔐",
                "checkpoint": "💾",
                "write": "✍️",
                "default": "❓",
            },
            default_key="default",
        ),
        EventMapping(
            name="ringtdvp_status",
            visual_markers={
                "start": "🚀",
                "iteration": "🔁",
                "converged": "🎯",
                "regularized": "⚠️",
                "failure": "❌",
                "partial": "🧩",
                "complete": "🎉",
                "default": "➡️",
            },
            default_key="default",
        ),
    ],
    field_mappings=[
        FieldMapping(
            log_key="ringtdvp.domain",
            event_set_name="ringtdvp",
            description="Solver subsystem",
        ),
        FieldMapping(
            log_key="ringtdvp.action",
            event_set_name="ringtdvp",
            description="Action being performed",
        ),
        FieldMapping(
            log_key="ringtdvp.status",
            event_set_name="ringtdvp",
            description="Action status",
        ),
        FieldMapping(
            log_key="bond_dim",
            event_set_name="ringtdvp",
            description="cMPS bond dimension D",
            value_type="integer",
        ),
        FieldMapping(
            log_key="iteration",
            event_set_name="ringtdvp",
            description="Optimizer iteration",
            value_type="integer",
        ),
        FieldMapping(
            log_key="energy",
            event_set_name="ringtdvp",
            description="Normalised total energy",
            value_type="float",
        ),
        FieldMapping(
            log_key="grad_norm",
            event_set_name="ringtdvp",
            description="Natural-gradient norm",
            value_type="float",
        ),
        FieldMapping(
            log_key="omega",
            event_set_name="ringtdvp",
            description="Rotation rate of the barrier",
            value_type="float",
        ),
        FieldMapping(
            log_key="residual",
            event_set_name="ringtdvp",
            description="Solver residual",
            value_type="float",
        ),
        FieldMapping(
            log_key="row",
            event_set_name="ringtdvp",
            description="Contraction term-table row",
            value_type="string",
        ),
        FieldMapping(
            log_key="wall_ms",
            event_set_name="ringtdvp",
            description="Wall time in milliseconds",
            value_type="float",
        ),
    ],
    priority=90,
)

# 🐝📁🔚
