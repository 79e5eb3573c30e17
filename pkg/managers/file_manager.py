"""
File Manager
============

Manages file system operations.
Follows SRP: Only handles file system utilities.
"""

import hashlib
import os
import shutil
from pathlib import Path
from typing import Dict, List, Optional, Union

from core.exceptions import ArtifactError

PathLike = Union[str, Path]


class FileManager:
    """
    Manager responsible for file system operations.

    Follows SRP: Only handles file operations.
    """

    def ensure_directory(self, directory: PathLike) -> Path:
        """
        Ensure directory exists, create if necessary.

        Args:
            directory: Directory path

        Returns:
            The directory as a Path
        """
        os.makedirs(directory, exist_ok=True)
        return Path(directory)

    def file_exists(self, filepath: PathLike) -> bool:
        return os.path.exists(filepath) and os.path.isfile(filepath)

    def directory_exists(self, directory: PathLike) -> bool:
        return os.path.exists(directory) and os.path.isdir(directory)

    def require_file(self, filepath: PathLike, step: Optional[str] = None) -> Path:
        """
        Fail with an actionable error when an artifact is missing.

        Args:
            filepath: Expected file
            step: CLI step that produces it

        Returns:
            The file as a Path
        """
        if not self.file_exists(filepath):
            raise ArtifactError(f"missing {filepath}", step=step)
        return Path(filepath)

    def require_directory(self, directory: PathLike, step: Optional[str] = None) -> Path:
        if not self.directory_exists(directory):
            raise ArtifactError(f"missing directory {directory}", step=step)
        return Path(directory)

    def list_files(self, directory: PathLike, pattern: str = "*") -> List[Path]:
        """
        List files matching a glob pattern, sorted by name.

        Args:
            directory: Directory to search
            pattern: Glob pattern

        Returns:
            Sorted file paths (empty if the directory is missing)
        """
        if not self.directory_exists(directory):
            return []
        return sorted(p for p in Path(directory).glob(pattern) if p.is_file())

    def reset_directory(self, directory: PathLike) -> Path:
        """Remove a directory tree if present and recreate it empty."""
        if self.directory_exists(directory):
            shutil.rmtree(directory)
        return self.ensure_directory(directory)

    def tree_digest(self, directory: PathLike) -> Dict[str, str]:
        """
        SHA-256 of every file below a directory.

        Args:
            directory: Root directory

        Returns:
            Mapping of relative POSIX path to hex digest
        """
        root = Path(directory)
        digests = {}
        for path in sorted(root.rglob("*")):
            if path.is_file():
                digests[path.relative_to(root).as_posix()] = hashlib.sha256(path.read_bytes()).hexdigest()
        return digests

    def tree_fingerprint(self, directory: PathLike) -> str:
        """Single SHA-256 over tree_digest(); equal trees give equal fingerprints."""
        digest = hashlib.sha256()
        for name, file_hash in self.tree_digest(directory).items():
            digest.update(f"{name}\0{file_hash}\n".encode("utf-8"))
        return digest.hexdigest()
