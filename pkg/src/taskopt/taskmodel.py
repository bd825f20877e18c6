"""Named task-space trajectories of arbitrary dimension.

A task model carries no kinematics.  Coupling a task trajectory to a robot
(for example forward kinematics matching a task state) is expressed by the
user as equality constraints in the builder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["TaskModel"]


@dataclass(frozen=True)
class TaskModel:
    """A free trajectory block: ``dim`` values per time step per derivative order."""

    name: str
    dim: int
    time_derivs: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("task dimension must be at least 1")
        orders = tuple(int(d) for d in self.time_derivs)
        if len(set(orders)) != len(orders):
            raise ValueError("duplicate derivative order")
        if not orders or min(orders) != 0:
            raise ValueError("derivative orders must start at 0")
        if any(d < 0 for d in orders):
            raise ValueError("derivative orders must be non-negative")
        object.__setattr__(self, "time_derivs", orders)

    @property
    def ndof(self) -> int:
        return self.dim

    def get_name(self) -> str:
        return self.name
