#!/usr/bin/env python3
"""Regenerates the small capture fixtures used by the reader tests (requires scapy)."""
import os

from scapy.all import ARP, DNS, DNSQR, IP, IPv6, TCP, UDP, Dot1Q, Ether, Raw, wrpcap
from scapy.utils import PcapNgWriter

HERE = os.path.dirname(os.path.abspath(__file__))
T0 = 1700000000.25
LAN = "192.168.1.10"
MAC = "02:00:00:00:00:0a"
GW = "02:00:00:00:00:01"


def stamp(pkts, t0=T0, step=0.5):
    for i, p in enumerate(pkts):
        p.time = t0 + i * step
    return pkts


def dns_query():
    return Ether(src=MAC, dst=GW) / IP(src=LAN, dst="9.9.9.9") / UDP(sport=53000, dport=53) / DNS(
        id=7, rd=1, qd=DNSQR(qname="www.example.com"))


def mixed():
    return stamp([
        Ether(src=MAC, dst="ff:ff:ff:ff:ff:ff") / ARP(psrc=LAN, pdst="192.168.1.1"),
        Ether(src=MAC, dst=GW) / IP(src=LAN, dst="203.0.113.5") / TCP(sport=40000, dport=443, flags="PA") / Raw(b"x" * 100),
        Ether(src=GW, dst=MAC) / IP(src="203.0.113.5", dst=LAN) / TCP(sport=443, dport=40000, flags="A"),
        Ether(src=MAC, dst=GW) / IP(src=LAN, dst="203.0.113.5") / TCP(sport=40000, dport=443, flags="PA") / Raw(b"y" * 300),
        Ether(src=MAC, dst=GW) / IPv6(src="fd00::10", dst="2001:db8::1") / UDP(sport=5000, dport=6000) / Raw(b"z" * 20),
        Ether(src=MAC, dst=GW) / Dot1Q(vlan=10) / IP(src=LAN, dst="203.0.113.7") / UDP(sport=1234, dport=4321) / Raw(b"v" * 8),
    ])


def main():
    wrpcap(os.path.join(HERE, "empty.pcap"), [], linktype=1)
    wrpcap(os.path.join(HERE, "dns_query.pcap"), stamp([dns_query()]))
    wrpcap(os.path.join(HERE, "mixed.pcap"), mixed())
    w = PcapNgWriter(os.path.join(HERE, "mixed.pcapng"))
    for p in mixed():
        w.write(p)
    w.close()
    with open(os.path.join(HERE, "dns_query.pcap"), "rb") as f:
        data = f.read()
    with open(os.path.join(HERE, "truncated.pcap"), "wb") as f:
        f.write(data[:-10])


if __name__ == "__main__":
    main()
