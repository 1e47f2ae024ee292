"""Database engine and session factory for the LLM usage log (PostgreSQL/SQLite)."""

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import DeclarativeBase, sessionmaker
from sqlalchemy.pool import QueuePool, StaticPool

from app.config import settings


class Base(DeclarativeBase):
    """Base class for all ORM models."""

    pass


def create_db_engine(database_url: str) -> Engine:
    """Create database engine with appropriate configuration."""
    if database_url.startswith("sqlite"):
        # SQLite configuration; in-memory databases share one connection across threads
        in_memory = database_url in ("sqlite://", "sqlite:///:memory:")
        return create_engine(
            database_url,
            connect_args={"check_same_thread": False},
            poolclass=StaticPool if in_memory else None,
            echo=settings.debug,
        )
    else:
        # PostgreSQL configuration with connection pooling
        return create_engine(
            database_url,
            poolclass=QueuePool,
            pool_size=5,
            max_overflow=10,
            pool_pre_ping=True,
            echo=settings.debug,
        )


def init_usage_db(database_url: str) -> sessionmaker:
    """Create the usage-log tables if needed and return a session factory."""
    from app.models import LlmUsageLog  # noqa: F401  registers the table

    engine = create_db_engine(database_url)
    Base.metadata.create_all(engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
