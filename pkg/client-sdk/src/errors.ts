/** Typed errors mirroring the wire protocol's response status bytes. */

export class SkyshardError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = new.target.name;
  }
}

export class ConnectionRefused extends SkyshardError {}
export class ProtocolError extends SkyshardError {}
export class NotFound extends SkyshardError {}
export class DecodeFailed extends SkyshardError {}
export class UnknownColumn extends SkyshardError {}
export class TypeMismatch extends SkyshardError {}
export class IndexMissing extends SkyshardError {}
export class InternalError extends SkyshardError {}
export class BadRequest extends SkyshardError {}

export const STATUS_OK = 0;

const STATUS_ERRORS: Record<number, new (m: string, s?: number) => SkyshardError> = {
  1: NotFound,
  2: DecodeFailed,
  3: UnknownColumn,
  4: TypeMismatch,
  5: IndexMissing,
  6: InternalError,
  255: BadRequest,
};

export function errorForStatus(status: number, message: string): SkyshardError {
  const cls = STATUS_ERRORS[status] ?? InternalError;
  return new cls(message, status);
}
