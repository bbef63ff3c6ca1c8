from sqlalchemy import DateTime, Float, Integer, String
from sqlalchemy.orm import attributes

from src.aledg.models import ConvergenceRecord, SimulationRun


def test_simulation_run_table_columns_and_relationships() -> None:
    # Arrange
    table = SimulationRun.__table__

    # Act
    cols = set(table.columns.keys())
    case_col = table.columns["case"]
    error_col = table.columns["l2_density_error"]
    created_at_col = table.columns["created_at"]

    # Assert
    expected = {
        "id",
        "case",
        "order",
        "cells",
        "cfl",
        "final_time",
        "steps",
        "rejected_steps",
        "flagged_max",
        "l2_density_error",
        "wall_seconds",
        "created_at",
    }
    assert expected == cols

    assert isinstance(case_col.type, String)
    assert getattr(case_col.type, "length", None) == 64

    assert isinstance(error_col.type, Float)
    assert error_col.nullable is True

    assert isinstance(created_at_col.type, DateTime)
    assert isinstance(
        getattr(SimulationRun, "convergence_records"),
        attributes.InstrumentedAttribute,
    )


def test_convergence_record_table_columns_and_fks() -> None:
    # Arrange
    table = ConvergenceRecord.__table__

    # Act
    cols = set(table.columns.keys())
    order_col = table.columns["order"]
    rate_col = table.columns["rate"]
    run_id_col = table.columns["run_id"]

    # Assert
    expected = {
        "id",
        "label",
        "order",
        "mesh_size",
        "error",
        "rate",
        "run_id",
        "created_at",
    }
    assert expected == cols

    assert isinstance(order_col.type, Integer)
    assert rate_col.nullable is True
    fks = list(run_id_col.foreign_keys)
    assert len(fks) == 1
    assert fks[0].target_fullname == "simulation_runs.id"
    assert fks[0].ondelete == "SET NULL"


def test_simulation_run_repr_names_case_and_size() -> None:
    # Arrange
    run = SimulationRun(id=3, case="vortex", order=2, cells=800)

    # Act
    text = repr(run)

    # Assert
    assert text == "<SimulationRun(id=3, case='vortex', order=2, cells=800)>"
