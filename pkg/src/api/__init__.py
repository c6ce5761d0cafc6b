"""API package."""