"""
Publish/subscribe over the condmon bus
======================================

Start a broker, connect two clients, and move a few telemetry samples
across a socket. Also peeks at the framed wire format underneath.
"""

import struct

from condmon.bus.broker import Broker
from condmon.bus.client import BusClient
from condmon.bus import protocol
from condmon.model import Timestamp

# Every frame on the wire is magic + version + kind + u32 length + body.
frame = protocol.encode_frame(protocol.FrameKind.PING, b"")
print("a PING frame on the wire:", frame.hex())

# A broker is just a thread; port 0 picks a free port.
with Broker(port=0) as broker:
    address = "%s:%d" % broker.address
    print("broker listening on", address)

    with BusClient(address) as pub, BusClient(address) as sub:
        # Topic globs: '*' matches one path segment, '**' a whole suffix.
        battery = sub.subscribe("*/battery")

        pub.advertise_topic("robot1/battery")
        pub.advertise_topic("robot1/wifi")
        for i, pct in enumerate([99.5, 99.4, 99.2]):
            stamp = Timestamp(1000 + i, 0)
            pub.publish_raw("robot1/battery", stamp, i + 1,
                            struct.pack("<d", pct))
            pub.publish_raw("robot1/wifi", stamp, i + 1,
                            struct.pack("<d", -44.0))

        # Only the battery samples come back; wifi does not match.
        for _ in range(3):
            msg = battery.get(timeout=2.0)
            print("received", msg.stream, msg.stamp.canonical(),
                  "value", msg.scalar())
