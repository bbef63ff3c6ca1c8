from datetime import datetime, timezone
from typing import TYPE_CHECKING, List, Optional

from sqlalchemy import DateTime, Float, Integer, String, text
from sqlalchemy.orm import Mapped, mapped_column, relationship

from src.aledg.models.base import Base

if TYPE_CHECKING:
    from .convergence_record import ConvergenceRecord


class SimulationRun(Base):
    """Summary of one completed solver run.

    Attributes:
        id (int): Primary key.
        case (str): Case name.
        order (int): Polynomial degree N.
        cells (int): Number of main cells.
        cfl (float): CFL number.
        final_time (float): Reached final time.
        steps (int): Accepted time steps.
        rejected_steps (int): Rejected step attempts.
        flagged_max (int): Largest number of limited cells in one step.
        l2_density_error (Optional[float]): Density L2 error at t_f, when
            the case has an exact solution.
        wall_seconds (float): Elapsed wall-clock time.
        created_at (datetime): Creation timestamp (UTC).
    """

    __tablename__ = "simulation_runs"

    id: Mapped[int] = mapped_column(
        Integer, primary_key=True, autoincrement=True
    )
    case: Mapped[str] = mapped_column(String(64), nullable=False)
    order: Mapped[int] = mapped_column(Integer, nullable=False)
    cells: Mapped[int] = mapped_column(Integer, nullable=False)
    cfl: Mapped[float] = mapped_column(Float, nullable=False)
    final_time: Mapped[float] = mapped_column(Float, nullable=False)
    steps: Mapped[int] = mapped_column(Integer, nullable=False)
    rejected_steps: Mapped[int] = mapped_column(
        Integer, server_default=text("0")
    )
    flagged_max: Mapped[int] = mapped_column(
        Integer, server_default=text("0")
    )
    l2_density_error: Mapped[Optional[float]] = mapped_column(
        Float, nullable=True
    )
    wall_seconds: Mapped[float] = mapped_column(Float, nullable=False)
    created_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True),
        default=lambda: datetime.now(timezone.utc),
        nullable=False,
    )
    convergence_records: Mapped[List["ConvergenceRecord"]] = relationship(
        "ConvergenceRecord", back_populates="run"
    )

    def __repr__(self) -> str:
        return (
            f"<SimulationRun(id={self.id}, case='{self.case}', "
            f"order={self.order}, cells={self.cells})>"
        )
