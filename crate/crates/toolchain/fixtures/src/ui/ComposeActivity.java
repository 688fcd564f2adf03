package com.example.mail.ui;

import android.os.Bundle;
import android.view.View;
import android.widget.Button;

public class ComposeActivity extends BaseActivity {
    @Override
    protected void onCreate(Bundle state) {
        super.onCreate(state);
        setContentView(R.layout.compose);
        Button send = findViewById(R.id.btn_send);
        send.setOnClickListener(v -> onSendClicked());
        findViewById(R.id.btn_inbox).setOnClickListener(v -> onInboxClicked());
    }

    void onSendClicked() {
        MailClient.send(draft());
    }

    void onInboxClicked() {
        startActivity(InboxActivity.intent(this));
    }
}
