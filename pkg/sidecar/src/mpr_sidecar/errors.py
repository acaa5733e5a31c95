"""Service errors carrying the HTTP status they map to."""

from __future__ import annotations


class SidecarError(Exception):
    """Base class; subclasses pin the response status."""

    status = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class BadRequest(SidecarError):
    """Request body is structurally valid JSON but semantically unusable."""

    status = 400


class ImageNotFound(SidecarError):
    """image_ref does not resolve to a readable file under the image root."""

    status = 404
