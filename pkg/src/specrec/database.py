"""Results ledger for specrec using SQLAlchemy."""

import datetime
import json
import uuid
from typing import Any

from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

Base = declarative_base()


def _utcnow() -> datetime.datetime:
    return datetime.datetime.now(datetime.timezone.utc).replace(tzinfo=None)


class CampaignRunModel(Base):
    """Database model for campaign runs."""
    __tablename__ = "campaign_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(64), unique=True, nullable=False)
    campaign = Column(String(32), nullable=False)
    status = Column(String(16), nullable=False)  # running, completed, failed
    config_json = Column(Text, nullable=True)
    created_at = Column(DateTime, default=_utcnow)
    completed_at = Column(DateTime, nullable=True)


class ResultRowModel(Base):
    """Database model for result rows."""
    __tablename__ = "result_rows"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(64), nullable=False, index=True)
    campaign = Column(String(32), nullable=False)
    scheme = Column(String(64), nullable=False)
    family = Column(String(32), nullable=False)
    epsilon = Column(Float, nullable=False)
    seed = Column(Integer, nullable=False)
    horizon = Column(Integer, nullable=False)
    throughput = Column(Float, nullable=False)
    extra_json = Column(Text, nullable=True)


class Database:
    """Database interface for the results ledger."""

    def __init__(self, database_url: str = "sqlite:///specrec.db"):
        """Initialize database connection."""
        self.engine = create_engine(database_url)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False,
                                         bind=self.engine)
        Base.metadata.create_all(bind=self.engine)

    def get_session(self) -> Session:
        """Get database session."""
        return self.SessionLocal()

    def create_run(self, campaign: str, config: dict[str, Any] | None = None) -> CampaignRunModel:
        """Record the start of a campaign run."""
        with self.get_session() as session:
            run = CampaignRunModel(
                run_id=f"run-{uuid.uuid4().hex[:12]}",
                campaign=campaign,
                status="running",
                config_json=json.dumps(config, sort_keys=True) if config is not None else None,
            )
            session.add(run)
            session.commit()
            session.refresh(run)
            return run

    def complete_run(self, run_id: str, status: str = "completed") -> bool:
        """Mark a run as finished."""
        with self.get_session() as session:
            run = session.query(CampaignRunModel).filter(CampaignRunModel.run_id == run_id).first()
            if run:
                run.status = status
                run.completed_at = _utcnow()
                session.commit()
                return True
            return False

    def get_run(self, run_id: str) -> CampaignRunModel | None:
        with self.get_session() as session:
            return session.query(CampaignRunModel).filter(CampaignRunModel.run_id == run_id).first()

    def list_runs(self, campaign: str | None = None) -> list[CampaignRunModel]:
        """List runs, newest first."""
        with self.get_session() as session:
            query = session.query(CampaignRunModel)
            if campaign:
                query = query.filter(CampaignRunModel.campaign == campaign)
            return query.order_by(CampaignRunModel.id.desc()).all()

    def add_rows(self, run_id: str, rows: list[dict[str, Any]]) -> int:
        """Store result rows of a run; returns the number written."""
        with self.get_session() as session:
            for row in rows:
                session.add(ResultRowModel(
                    run_id=run_id,
                    campaign=row["campaign"],
                    scheme=row["scheme"],
                    family=row["family"],
                    epsilon=row["epsilon"],
                    seed=row["seed"],
                    horizon=row["horizon"],
                    throughput=row["throughput"],
                    extra_json=json.dumps(row.get("extra") or {}, sort_keys=True),
                ))
            session.commit()
            return len(rows)

    def list_rows(self, run_id: str) -> list[ResultRowModel]:
        with self.get_session() as session:
            return (session.query(ResultRowModel)
                    .filter(ResultRowModel.run_id == run_id)
                    .order_by(ResultRowModel.id)
                    .all())
