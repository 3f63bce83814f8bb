"""Tool handlers for the lowrank-varx-id MCP server."""

from handlers.tool_handlers import ToolHandler

__all__ = ["ToolHandler"]
