"""HTTP service wrapping the estimation pipeline.

The CLI uses the same handlers in-process; running ``pricefield serve``
exposes them over HTTP for long-lived multi-client use. Requests and
responses exchange file paths, so server and client share a filesystem.
"""
