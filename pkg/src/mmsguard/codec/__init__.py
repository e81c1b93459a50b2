"""BER, MMS PDU and ISO-on-TCP envelope codecs."""

from .ber import MalformedTlv, decode_tlv
from .envelope import MmsUnit, decode_envelope, encode_data_envelope
from .mms import (
    MmsMessage,
    ObjectName,
    OperPayload,
    PduKind,
    Service,
    Unencodable,
    UtcTimestamp,
    WriteItem,
    decode_mms,
    encode_mms,
    extract_time_accuracy,
    service_name,
)

__all__ = [
    "MalformedTlv",
    "MmsMessage",
    "MmsUnit",
    "ObjectName",
    "OperPayload",
    "PduKind",
    "Service",
    "Unencodable",
    "UtcTimestamp",
    "WriteItem",
    "decode_envelope",
    "decode_mms",
    "decode_tlv",
    "encode_data_envelope",
    "encode_mms",
    "extract_time_accuracy",
    "service_name",
]
