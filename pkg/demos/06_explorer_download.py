# Fetching an address history from an Etherscan-compatible explorer.
#
# Needs CHAINPROFILER_API_URL and CHAINPROFILER_API_KEY; responses are
# cached under CHAINPROFILER_CACHE_DIR (default ~/.cache/chainprofiler).
import os
import sys

from chainprofiler import ingest

if not os.environ.get("CHAINPROFILER_API_KEY"):
    print("set CHAINPROFILER_API_URL and CHAINPROFILER_API_KEY to run this demo")
    sys.exit(0)

client = ingest.ApiClient(ingest.ApiConfig.from_env(max_rps=4))
address = sys.argv[1] if len(sys.argv) > 1 else "0x0f2437ff38e032596f2226873038230dcb22c485"
txs = ingest.fetch_address_history(client, address)
print(len(txs), "transactions,", sum(t.is_internal for t in txs), "internal,", client.request_count, "requests")
ingest.write_transactions(f"{address}.csv", txs)
