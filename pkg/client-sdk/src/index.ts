export { Connection, connect } from "./connection.js";
export {
  AggState,
  ColumnType,
  ExecResult,
  Frame,
  QueryResult,
  Row,
  SealedObject,
  Value,
  decodeAggState,
  decodeFrame,
  decodeObject,
  encodeObject,
  encodeFrame,
  encodeTableObject,
  objectRows,
  parseExecRequest,
  parseExecResult,
  parseLookupRequest,
  parseLookupResult,
  parseQueryResult,
  scaledToFloat,
  schemaText,
} from "./format.js";
export {
  BadRequest,
  ConnectionRefused,
  DecodeFailed,
  IndexMissing,
  InternalError,
  NotFound,
  ProtocolError,
  SkyshardError,
  TypeMismatch,
  UnknownColumn,
  errorForStatus,
} from "./errors.js";
