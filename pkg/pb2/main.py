from fastapi import FastAPI

from pb2.routers import runs

app = FastAPI(
    title="PB2 Report Service",
    description="""
Read-only access to population-based tuning runs.

## Features

* **Runs** - list the trial logs in the configured log directory
* **Reports** - per-agent final and best scores, exploit counts and best configs
* **Records** - raw trial records filtered by event and round

Logs are written by `pb2 run`; point the service at their directory with
`PB2_LOG_DIR` or `pb2 serve --log-dir`.
""",
    version="1.0.0",
    license_info={
        "name": "MIT",
        "url": "https://opensource.org/licenses/MIT",
    },
    openapi_tags=[
        {
            "name": "health",
            "description": "Health check endpoints for monitoring.",
        },
        {
            "name": "runs",
            "description": "Trial logs and their reports.",
        },
    ],
)

app.include_router(runs.router, prefix="/api/v1")


@app.get(
    "/health",
    tags=["health"],
    summary="Health check",
    description="Returns the health status of the service.",
    response_description="Health status",
    responses={
        200: {
            "description": "Service is healthy",
            "content": {
                "application/json": {
                    "example": {"status": "healthy"}
                }
            },
        }
    },
)
def health_check():
    return {"status": "healthy"}
