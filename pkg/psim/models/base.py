"""Base models for psim.

This module contains the base model shared by the scenario and record models.
"""

from pydantic import BaseModel, ConfigDict


class PsimModel(BaseModel):
    """Base model for every configuration block.

    Unknown keys are rejected and instances are immutable.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)
