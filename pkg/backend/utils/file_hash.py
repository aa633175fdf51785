import hashlib
from pathlib import Path
from typing import Optional, Union

import numpy as np

from utils.logger import get_logger

logger = get_logger("file_hash")


class FileHashService:
    """Hashes for artifacts, config documents and tensors."""

    @staticmethod
    def calculate_file_hash(file_path: Union[str, Path], algorithm: str = "sha256") -> Optional[str]:
        """
        Calculate hash of a file

        Args:
            file_path: Path to the file
            algorithm: Hash algorithm to use (md5, sha1, sha256)

        Returns:
            Hexadecimal hash string or None if error
        """
        try:
            hash_obj = hashlib.new(algorithm)

            # Read file in chunks to handle large checkpoints
            with open(file_path, "rb") as f:
                while chunk := f.read(8192):
                    hash_obj.update(chunk)

            file_hash = hash_obj.hexdigest()
            logger.debug(f"Calculated hash: algorithm={algorithm}, file_path={file_path}, hash_value={file_hash[:16]}")
            return file_hash

        except OSError as e:
            logger.error(f"Failed to calculate hash: file_path={file_path}, error={str(e)}")
            return None

    @staticmethod
    def calculate_content_hash(content: Union[bytes, str], algorithm: str = "sha256") -> str:
        """
        Calculate hash of content bytes (str is hashed as UTF-8)
        """
        if isinstance(content, str):
            content = content.encode("utf-8")
        hash_obj = hashlib.new(algorithm)
        hash_obj.update(content)
        return hash_obj.hexdigest()

    @staticmethod
    def calculate_array_checksum(array: np.ndarray) -> str:
        """SHA-256 over shape, dtype and the little-endian bytes of an array."""
        arr = np.ascontiguousarray(array)
        hash_obj = hashlib.sha256()
        hash_obj.update(str(arr.shape).encode("ascii"))
        hash_obj.update(arr.dtype.newbyteorder("<").str.encode("ascii"))
        hash_obj.update(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
        return hash_obj.hexdigest()


file_hash_service = FileHashService()
