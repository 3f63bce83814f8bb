#!/usr/bin/env python3
"""
lowrank-varx-id MCP Server

A Model Context Protocol (MCP) server exposing low-rank VARX
identification: system simulation, nuclear-norm estimation, design
certification, bound prediction and the experiment harness.

Usage:
    python server.py

Architecture:
    server.py          - MCP entry point (this file)
    cli.py             - Experiment command line
    handlers/          - Tool call routing
    services/          - Simulation, estimation, certification, experiments
    models/            - Data models and schemas
    utils/             - Linear algebra, logging, validation, serialization
"""

from __future__ import annotations

import asyncio
import sys
from pathlib import Path
from typing import Any

# Add project root to path for imports
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

from mcp.server import Server
from mcp.server.stdio import stdio_server
from mcp.types import Tool, TextContent

from models.schemas import TOOL_DEFINITIONS
from handlers.tool_handlers import ToolHandler
from services.experiment_service import worker_count
from utils.logger import setup_logger

logger = setup_logger("server")


# =============================================================================
# SERVER INITIALIZATION
# =============================================================================

server = Server("lowrank-varx-id")
handler = ToolHandler()


@server.list_tools()
async def list_tools() -> list[Tool]:
    """Return all available tools.

    Returns:
        List of Tool definitions from models/schemas.py
    """
    return TOOL_DEFINITIONS


@server.call_tool()
async def call_tool(name: str, arguments: dict[str, Any]) -> list[TextContent]:
    """Handle MCP tool calls through the handler layer."""
    return await handler.handle(name, arguments)


# =============================================================================
# MAIN ENTRY POINT
# =============================================================================

async def main() -> None:
    """Run the MCP server over stdio until interrupted."""
    logger.info(f"Serving {len(TOOL_DEFINITIONS)} tools, experiment workers: {worker_count()}")
    async with stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            server.create_initialization_options(),
        )


def run_server() -> None:
    """Synchronous entry point for console script."""
    asyncio.run(main())


if __name__ == "__main__":
    run_server()
