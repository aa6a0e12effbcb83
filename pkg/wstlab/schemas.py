"""Module containing schema validation code for the wstlab package."""

import polars as pl

EDGE_SCHEMA = {
    "u": pl.Int64,
    "v": pl.Int64,
    "c": pl.Float64,
}
EDGE_SCHEMA_INT32 = EDGE_SCHEMA.copy()
EDGE_SCHEMA_INT32["u"] = pl.Int32
EDGE_SCHEMA_INT32["v"] = pl.Int32

ENVIRONMENT_SCHEMA = {
    "edge_index": pl.Int64,
    "u": pl.Int64,
    "v": pl.Int64,
    "label": pl.Float64,
}

EDGE_TABLE_SCHEMA = {
    "u": pl.Int64,
    "v": pl.Int64,
    "c": pl.Float64,
    "reff": pl.Float64,
    "kirchhoff_p": pl.Float64,
}

CENSUS_SCHEMA = {
    "pattern_encoding": pl.String,
    "k": pl.Int64,
    "t": pl.Int64,
    "stab": pl.Int64,
    "count": pl.Int64,
    "empirical_p": pl.Float64,
    "reference_p": pl.Float64,
    "theorem_sum_p": pl.Float64,
}


class PolarsSchemaError(Exception):
    """Exception raised when a polars schema is invalid."""

    pass


def validate_edge_schema(df: pl.DataFrame | pl.LazyFrame) -> None:
    """Validate that an edge frame has integer endpoints and float conductances.

    Args:
    df (pl.DataFrame | pl.LazyFrame): Edge frame to validate.

    Raises:
    PolarsSchemaError: If the schema of the frame does not match the
        expected schema.
    """
    validate_frame_schema(df, [EDGE_SCHEMA, EDGE_SCHEMA_INT32])


def validate_environment_schema(df: pl.DataFrame | pl.LazyFrame) -> None:
    """Validate an environment dump frame.

    Args:
    df (pl.DataFrame | pl.LazyFrame): Frame read back from an environment dump.

    Raises:
    PolarsSchemaError: If the schema of the frame does not match.
    """
    validate_frame_schema(df, [ENVIRONMENT_SCHEMA])


def validate_frame_schema(
    df: pl.DataFrame | pl.LazyFrame, expected_schemas: list[dict]
) -> None:
    """Validate that the schema of a frame matches one of the expected schemas.

    Args:
    df (pl.DataFrame | pl.LazyFrame): Frame to validate.
    expected_schemas (list[dict]): Acceptable schemas. Extra columns are allowed.

    Raises:
    PolarsSchemaError: If the schema of the frame does not match the
        expected schema.
    """
    schema = dict(df.collect_schema()) if isinstance(df, pl.LazyFrame) else dict(
        df.schema
    )
    if not _check_schemas(schema, expected_schemas):
        raise PolarsSchemaError(
            f"""
            Schema of dataframe does not match expected schema.
            Expected one of: {expected_schemas},
            Actual: {schema}
            """
        )


def _check_schemas(schema: dict, expected_schemas: list[dict]) -> bool:
    """Check that the schema of a dataframe matches the expected schema.

    Args:
    schema (dict): Schema to validate.
    expected_schemas (list[dict]): List of acceptable schema.
    """
    good_schema = False
    for expected_schema in expected_schemas:
        if all(
            name in schema and schema[name] == dtype
            for name, dtype in expected_schema.items()
        ):
            good_schema = True
            break
    return good_schema
