#pragma once

#include "carenet/time.hpp"
#include "carenet/ip.hpp"
#include "carenet/packet.hpp"
#include "carenet/pcap_reader.hpp"
#include "carenet/psl.hpp"
#include "carenet/identity.hpp"
#include "carenet/partition.hpp"
#include "carenet/window.hpp"
#include "carenet/features.hpp"
#include "carenet/feature_catalog.hpp"
#include "carenet/fasl.hpp"
#include "carenet/parameters.hpp"
#include "carenet/pipeline.hpp"
#include "carenet/synth.hpp"
#include "carenet/service.hpp"
