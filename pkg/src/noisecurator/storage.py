"""Artifact storage on a local directory or an S3-compatible bucket."""

import os
from abc import ABC, abstractmethod
from pathlib import Path
from typing import TYPE_CHECKING

import boto3
from botocore.exceptions import ClientError

from .logger import get_logger

if TYPE_CHECKING:
    from mypy_boto3_s3 import S3Client

logger = get_logger(__name__)

MISSING_KEY_CODES = {"404", "NoSuchKey", "NotFound"}


class ArtifactStore(ABC):
    """Flat namespace of named artifacts."""

    @abstractmethod
    def exists(self, name: str) -> bool: ...

    @abstractmethod
    def write_bytes(
        self, name: str, data: bytes, content_type: str = "application/octet-stream"
    ) -> None: ...

    @abstractmethod
    def read_bytes(self, name: str) -> bytes: ...

    @abstractmethod
    def location(self, name: str) -> str: ...

    def write_text(self, name: str, text: str, content_type: str = "text/plain") -> None:
        self.write_bytes(name, text.encode("utf-8"), content_type)

    def read_text(self, name: str) -> str:
        return self.read_bytes(name).decode("utf-8")


class LocalArtifactStore(ArtifactStore):
    """Artifacts as files under a root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self._path(name).exists()

    def write_bytes(
        self, name: str, data: bytes, content_type: str = "application/octet-stream"
    ) -> None:
        path = self._path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        logger.debug(f"Wrote {len(data)} bytes to {path}")

    def read_bytes(self, name: str) -> bytes:
        return self._path(name).read_bytes()

    def location(self, name: str) -> str:
        return str(self._path(name))


class S3ArtifactStore(ArtifactStore):
    """Artifacts as objects under `prefix` in an S3 bucket.

    The endpoint can be redirected (e.g. to a local S3 mock) with S3_ENDPOINT.
    """

    def __init__(self, bucket_name: str, prefix: str = "", client: "S3Client | None" = None):
        self.bucket_name = bucket_name
        self.prefix = prefix.strip("/")
        if client is None:
            s3_endpoint = os.getenv("S3_ENDPOINT")
            client = boto3.client("s3", endpoint_url=s3_endpoint)
        self.s3_client = client

    def _key(self, name: str) -> str:
        return f"{self.prefix}/{name}" if self.prefix else name

    def exists(self, name: str) -> bool:
        try:
            self.s3_client.head_object(Bucket=self.bucket_name, Key=self._key(name))
            return True
        except ClientError as e:
            if e.response["Error"]["Code"] in MISSING_KEY_CODES:
                return False
            logger.error(f"Error checking s3://{self.bucket_name}/{self._key(name)}: {e}")
            raise

    def write_bytes(
        self, name: str, data: bytes, content_type: str = "application/octet-stream"
    ) -> None:
        self.s3_client.put_object(
            Bucket=self.bucket_name,
            Key=self._key(name),
            Body=data,
            ContentType=content_type,
        )
        logger.debug(f"Uploaded {len(data)} bytes to {self.location(name)}")

    def read_bytes(self, name: str) -> bytes:
        response = self.s3_client.get_object(Bucket=self.bucket_name, Key=self._key(name))
        return response["Body"].read()

    def location(self, name: str) -> str:
        return f"s3://{self.bucket_name}/{self._key(name)}"


def open_store(uri: str | Path) -> ArtifactStore:
    """`s3://bucket/prefix` opens an S3 store; anything else is a local directory."""
    text = str(uri)
    if text.startswith("s3://"):
        bucket, _, prefix = text.removeprefix("s3://").partition("/")
        if not bucket:
            raise ValueError(f"S3 URI has no bucket: {text}")
        return S3ArtifactStore(bucket, prefix)
    return LocalArtifactStore(text)
