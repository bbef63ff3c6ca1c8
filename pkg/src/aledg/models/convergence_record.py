from datetime import datetime, timezone
from typing import TYPE_CHECKING, Optional

from sqlalchemy import DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.orm import Mapped, mapped_column, relationship

from src.aledg.models.base import Base

if TYPE_CHECKING:
    from .simulation_run import SimulationRun


class ConvergenceRecord(Base):
    """One row of a convergence table.

    Attributes:
        id (int): Primary key.
        label (str): Study label grouping the rows.
        order (int): Polynomial degree N.
        mesh_size (float): Largest circumcircle diameter on the final mesh.
        error (float): L2 error of the density.
        rate (Optional[float]): Observed order against the previous row;
            empty for the first row.
        run_id (Optional[int]): Run that produced the row.
        created_at (datetime): Creation timestamp (UTC).
    """

    __tablename__ = "convergence_records"

    id: Mapped[int] = mapped_column(
        Integer, primary_key=True, autoincrement=True
    )
    label: Mapped[str] = mapped_column(String(128), nullable=False)
    order: Mapped[int] = mapped_column(Integer, nullable=False)
    mesh_size: Mapped[float] = mapped_column(Float, nullable=False)
    error: Mapped[float] = mapped_column(Float, nullable=False)
    rate: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    run_id: Mapped[Optional[int]] = mapped_column(
        Integer,
        ForeignKey("simulation_runs.id", ondelete="SET NULL"),
        nullable=True,
    )
    created_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True),
        default=lambda: datetime.now(timezone.utc),
        nullable=False,
    )
    run: Mapped[Optional["SimulationRun"]] = relationship(
        "SimulationRun", back_populates="convergence_records"
    )
