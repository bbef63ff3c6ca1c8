import logging
from typing import Any, Dict, List, Optional, Sequence

from sqlalchemy import create_engine, select
from sqlalchemy.orm import Session, sessionmaker

from src.aledg.models import Base, ConvergenceRecord, SimulationRun

logger = logging.getLogger(__name__)


class ResultsDBService:
    """Database helper storing run summaries and convergence tables.

    Attributes:
        db_url (str): Database connection URL.
        _engine: SQLAlchemy Engine instance.
        _SessionLocal: Session factory.
    """

    def __init__(self, db_url: str) -> None:
        self.db_url: str = db_url
        self._engine = create_engine(db_url, echo=False, future=True)
        self._SessionLocal = sessionmaker(
            bind=self._engine, expire_on_commit=False
        )

    def get_session(self) -> Session:
        return self._SessionLocal()

    def create_schema(self) -> None:
        """Create all result tables that do not exist yet."""
        Base.metadata.create_all(self._engine)
        logger.info(f"📦 Results schema ready at {self.db_url}")

    def add_run(self, summary: Dict[str, Any]) -> SimulationRun:
        """Insert a SimulationRun built from ``summary``.

        Args:
            summary (Dict[str, Any]): Column values (case, order, cells, cfl,
                final_time, steps, rejected_steps, flagged_max,
                l2_density_error, wall_seconds).

        Returns:
            SimulationRun: The created and refreshed record.

        Raises:
            ValueError: If ``summary`` is empty.
        """
        if not summary:
            raise ValueError("Run summary is empty")
        with self._SessionLocal() as session:
            record = SimulationRun(**summary)
            session.add(record)
            session.commit()
            session.refresh(record)
            return record

    def add_convergence_rows(
        self,
        label: str,
        order: int,
        rows: Sequence[Dict[str, Optional[float]]],
        run_id: Optional[int] = None,
    ) -> List[ConvergenceRecord]:
        """Insert the rows of one convergence table.

        Args:
            label (str): Study label.
            order (int): Polynomial degree N.
            rows (Sequence[Dict[str, Optional[float]]]): Mappings with
                ``mesh_size``, ``error`` and ``rate`` keys.
            run_id (Optional[int]): Run to link the rows to.

        Returns:
            List[ConvergenceRecord]: Persisted records in row order.
        """
        with self._SessionLocal() as session:
            records = [
                ConvergenceRecord(
                    label=label,
                    order=order,
                    mesh_size=row["mesh_size"],
                    error=row["error"],
                    rate=row.get("rate"),
                    run_id=run_id,
                )
                for row in rows
            ]
            session.add_all(records)
            session.commit()
            for record in records:
                session.refresh(record)
        logger.info(f"🆕 Stored {len(records)} convergence rows for {label}")
        return records

    def get_convergence_rows(self, label: str) -> List[ConvergenceRecord]:
        """Rows of a study ordered by decreasing mesh size."""
        with self._SessionLocal() as session:
            result = session.execute(
                select(ConvergenceRecord)
                .filter(ConvergenceRecord.label == label)
                .order_by(ConvergenceRecord.mesh_size.desc())
            )
            return list(result.scalars().all())
